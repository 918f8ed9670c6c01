use std::process::ExitCode;

fn main() -> ExitCode {
    match adalog_cli::run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.kind == "Help" => {
            print!("{}", e.message);
            ExitCode::SUCCESS
        }
        Err(e) if e.kind == "Usage" => {
            eprint!("{}", e.message);
            eprintln!("{}", e.to_json());
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
