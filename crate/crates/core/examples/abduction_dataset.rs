//! How the two target setups turn one video into training examples.

use abduction::relation::{build_abduction_dataset, Setup};
use abduction::synthworld::{generate_episode, generate_world, WorldOverrides};

fn main() -> abduction::Result<()> {
    let world = generate_world(3, &WorldOverrides::default())?;
    let episode = generate_episode(&world, "video", 5, 4)?;
    for s in &episode.snapshots {
        println!("t={} performed {:?}", s.record.snapshot_index, s.actions.indices());
    }
    for setup in [Setup::AllPast, Setup::LastTwo] {
        println!("{setup}:");
        for ex in build_abduction_dataset(&[episode.records()], setup, world.n_actions)? {
            println!(
                "  t={} target {:?}{}",
                ex.snapshot_index,
                ex.target.indices(),
                if ex.is_last_snapshot { " (last)" } else { "" }
            );
        }
    }
    Ok(())
}
