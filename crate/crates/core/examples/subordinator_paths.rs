//! Sample subordinator paths, regularize them, and compare the empirical
//! Laplace transform with `e^{-t B(r)}`. Writes one path to a CSV.

use subharnack::pathgen::{sample_increment, sample_timechanged_bm, write_paths_csv, ClockPath};
use subharnack::rng::{tags, RngStream};
use subharnack::{BernsteinFunction, ClockLaw, MCEstimate, TimeGrid, Workers};

fn main() -> subharnack::Result<()> {
    let workers = Workers::from_env();
    let b = BernsteinFunction::stable(0.75)?;
    let (t, n) = (1.0, 20_000);
    let draws: Vec<f64> = workers
        .map(n, |i| sample_increment(&b, t, &mut RngStream::new(1, i as u64, tags::CLOCK).rng()))
        .into_iter()
        .collect::<subharnack::Result<_>>()?;
    for r in [0.5, 1.0, 2.0] {
        let e = MCEstimate::from_samples(&draws.iter().map(|s| (-r * s).exp()).collect::<Vec<_>>());
        let exact = b.laplace_transform(r, t);
        println!("r = {r}: E e^(-r S) = {:.5} ± {:.1e}, exact {exact:.5}, z = {:.2}", e.mean, e.stderr, e.z_against(exact));
    }

    let grid = TimeGrid::uniform(1.0, 200)?;
    let law = ClockLaw::regularized(b, 0.05);
    let stream = RngStream::new(7, 0, 0);
    let clock = law.sample(&grid, &mut stream.child(tags::CLOCK).rng())?;
    let biggest_jump = clock.raw.values().windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    println!(
        "one path: S(1) = {:.4}, largest jump {biggest_jump:.4}, regularized clock strictly increasing: {}",
        clock.raw.values()[grid.steps()],
        clock.is_strictly_increasing()
    );
    let bm = sample_timechanged_bm(&clock, 2, &mut stream.child(tags::BROWNIAN).rng())?;
    let path = std::env::temp_dir().join("subharnack_clock_path.csv");
    write_paths_csv(std::fs::File::create(&path)?, &clock, &bm)?;
    println!("wrote {} ({} rows)", path.display(), clock.grid().times().len());
    Ok(())
}
