use abn_cli::{run, Cli, Outcome};
use clap::Parser;

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    match run(cli.command, &argv) {
        Ok(outcome) => report(&outcome),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn report(outcome: &Outcome) {
    match outcome {
        Outcome::Generated(g) => {
            for (kind, n) in &g.counts {
                println!("{kind}: {n}");
            }
            println!("wrote {}", g.path.display());
        }
        Outcome::Trained(t) => {
            if let Some(last) = t.log.last() {
                println!("step {} total loss {:.5}", last.step, last.total);
            }
            if let Some(ckpt) = t.checkpoints.last() {
                println!("wrote {}", ckpt.display());
            }
        }
        Outcome::Ablated(a) => {
            println!("{:<20} {:>8} {:>8} {:>10} {:>8}", "variant", "ADE", "FDE", "collision", "entropy");
            for r in &a.rows {
                let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
                println!("{:<20} {:>8.4} {:>8.4} {:>10} {:>8}", r.variant, r.ade, r.fde, opt(r.collision), opt(r.entropy));
            }
            println!("wrote {}", a.metrics_csv.display());
        }
        Outcome::Explained(paths) => println!("wrote {} images", paths.len()),
        Outcome::Counterfactual(r) => println!("{}", r.line()),
    }
}
