use susceptibility::verify::{run_suite, Suite};

fn main() {
    let outcomes = run_suite(Suite::All, |o| println!("{o}"));
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} passed, {failed} failed", outcomes.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
