//! Regenerates `src/sim/truths_table.rs`: Monte-Carlo truth constants for
//! the simulation models at the experiment grid points.
//!
//! Usage: gen_truths [--fast]
//! Prints the new file content to stdout. `--fast` uses reduced budgets for
//! smoke-testing the generator itself.

use tailpot::sim::{oracle_a0, oracle_quantile, ModelName};

fn main() {
    let fast = std::env::args().any(|a| a == "--fast");
    let (n_big, reps, points) = if fast {
        (200_000, 8, 20_000_000)
    } else {
        (1_000_000, 48, 100_000_000)
    };
    let ratios = [0.025f64, 0.05, 0.1];
    let ns = [1000usize, 2000, 4000];
    // Models without closed-form truths; see `true_values` for the rest.
    let a0_models = [
        ModelName::Ar1T1,
        ModelName::Arma11T2,
        ModelName::Arch1,
        ModelName::Arma21T5,
        ModelName::Ar1Garch11,
    ];
    let q_models = [
        ModelName::Arma11T2,
        ModelName::Arch1,
        ModelName::Arma21T5,
        ModelName::Ar1Garch11,
    ];

    println!("//! Frozen Monte-Carlo truth constants for the simulation models.");
    println!("//!");
    println!("//! Generated by the `gen_truths` binary; regenerate when adding grid points.");
    println!("//! Entries: (model, k/n in tenths of a percent, a0) and (model, n, quantile");
    println!("//! at level 1 - 1/n). Models with closed-form truths are not tabulated.");
    println!();
    println!("pub static A0: &[(&str, u32, f64)] = &[");
    for model in a0_models {
        for ratio in ratios {
            let a0 = oracle_a0(model, ratio, n_big, reps, 0x713a_b1e5).unwrap();
            let key = (ratio * 1000.0).round() as u32;
            println!("    (\"{}\", {key}, {a0:.6}),", model.as_str());
            eprintln!("a0 {} ratio {ratio}: {a0:.6}", model.as_str());
        }
    }
    println!("];");
    println!();
    println!("pub static QUANTILE: &[(&str, usize, f64)] = &[");
    for model in q_models {
        for n in ns {
            let p = 1.0 - 1.0 / n as f64;
            let q = oracle_quantile(model, p, points, 0x9_e3e7).unwrap();
            println!("    (\"{}\", {n}, {q:.6}),", model.as_str());
            eprintln!("q {} n {n}: {q:.6}", model.as_str());
        }
    }
    println!("];");
}
