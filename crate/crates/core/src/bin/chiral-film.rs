fn main() {
    std::process::exit(chiral_film::cli::dispatch(std::env::args_os()));
}
