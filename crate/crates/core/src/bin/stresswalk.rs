fn main() { std::process::exit(stresswalk::cli::run(std::env::args_os())); }
