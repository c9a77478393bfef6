//! Mock data with multiplicative Gaussian noise, its sample summary, and the
//! principal-submatrix restriction used for each data subset.
//!
//! cargo run --release --example mock_data

use subset_ic::gaussdata::{generate_mock_data, restrict, summarize, CoordinateGrid, SubsetSpec};

fn main() -> subset_ic::Result<()> {
    let truth = |t: f64| 1.80 - 0.53 * (1.0 - t / 16.0);
    let grid = CoordinateGrid::integer_range(1, 15)?;
    let data = generate_mock_data(truth, &grid, 0.0, 1.0, 320, 20230417)?;
    let summary = summarize(&data)?;

    println!("{:>3} {:>8} {:>8} {:>8}", "t", "f_T", "mean", "stderr");
    let se = summary.stderr_covariance();
    for (i, &t) in grid.points().iter().enumerate() {
        println!(
            "{t:>3} {:>8.4} {:>8.4} {:>8.4}",
            truth(t),
            summary.mean()[i],
            se.matrix()[(i, i)].sqrt()
        );
    }

    let tail = restrict(&summary, &SubsetSpec::from_t_min(&grid, 12)?)?;
    println!("t >= 12 keeps {} points; summary JSON:", tail.dim());
    println!("{}", tail.to_json()?);

    let mut csv = Vec::new();
    data.write_csv(&mut csv)?;
    let text = String::from_utf8_lossy(&csv);
    println!(
        "first CSV lines:\n{}",
        text.lines().take(4).collect::<Vec<_>>().join("\n")
    );
    Ok(())
}
