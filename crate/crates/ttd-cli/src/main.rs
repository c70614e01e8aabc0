fn main() {
    eprintln!("ttd: not wired yet");
    std::process::exit(1);
}
