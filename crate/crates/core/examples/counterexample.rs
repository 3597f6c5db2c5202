//! Bumps that shrink in L1 while their stop outputs stay at -1.

use hysterix::control::counterexample::counterexample_demo;

fn main() -> hysterix::Result<()> {
    let report = counterexample_demo(&[1, 2, 4, 8, 16, 32, 64, 128])?;
    println!("r = {}, y0 = {}", report.r, report.y0);
    println!("{:>5} {:>8} {:>10} {:>8} {:>8}", "n", "|u|_BV", "|u|_L1", "|y|_BV", "y(T)");
    for row in &report.rows {
        println!("{:5} {:8.4} {:10.6} {:8.4} {:8.4}", row.n, row.u_bv, row.u_l1, row.y_bv, row.y_terminal);
    }
    println!("output of the limit input at T: {}", report.limit_terminal);
    Ok(())
}
