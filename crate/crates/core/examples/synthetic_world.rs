//! Sample a causal world, walk one episode and ask the Bayes oracle what
//! happened.
//!
//! ```text
//! cargo run --release --example synthetic_world
//! ```

use abduction::synthworld::{generate_episode, generate_world, oracle_map, Oracle, SyntheticSplits, WorldOverrides};

fn main() -> abduction::Result<()> {
    let world = generate_world(7, &WorldOverrides::default())?;
    let vocab = world.vocabulary();
    println!("{} objects, {} predicates, {} actions", world.n_objects, world.n_predicates, world.n_actions);
    for (a, rules) in world.causal_rules.iter().enumerate() {
        let rels: Vec<String> = rules.iter().map(|&(c, p)| format!("{}/p{p}", vocab.objects[c])).collect();
        println!("  {:<10} -> {}", vocab.actions[a], rels.join(", "));
    }

    let episode = generate_episode(&world, "demo", 11, 4)?;
    let oracle = Oracle::new(&world)?;
    for (t, snap) in episode.snapshots.iter().enumerate() {
        let posterior = oracle.posterior(&snap.relations, t)?;
        let best: Vec<String> = posterior
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.5)
            .map(|(a, p)| format!("{} {p:.2}", vocab.actions[a]))
            .collect();
        println!(
            "t={t}: {} relations observed, truth {:?}, oracle believes [{}]",
            snap.relations.len(),
            snap.cumulative.indices(),
            best.join(", ")
        );
    }

    let splits = SyntheticSplits::generate(7, &WorldOverrides::default(), 1, 100)?;
    println!("oracle mAP on 100 test episodes: {:.2}", oracle_map(&splits.world, &splits.test)?);
    Ok(())
}
