//! Closed-form stress around an elliptical hole under uniaxial load along z:
//! concentration at the hole edge against `1 + 2a/b`, and the far field.
//!
//! cargo run --release --example analytic_stress

use voidfield::fieldgen::{solve_stress, Ellipse2D, GridSpec, HoleSolution, MaterialLoad};

fn main() -> voidfield::Result<()> {
    let mat = MaterialLoad::default();
    println!("{:>7} {:>7} {:>10} {:>10} {:>12}", "a [mm]", "b [mm]", "1+2a/b", "edge", "grid peak");
    let grid = GridSpec::square(128)?;
    for (a, b) in [(0.0075, 0.0075), (0.01, 0.005), (0.005, 0.01), (0.01, 0.0075)] {
        let ellipse = Ellipse2D::new(a, b, 0.0)?;
        let edge = HoleSolution::new(ellipse).local_stress(a, 0.0).szz;
        let field = solve_stress(&ellipse, &mat, &grid)?;
        let peak = field.iter().cloned().fold(0.0, f64::max) / mat.nominal_stress;
        println!("{:7.2} {:7.2} {:10.3} {edge:10.4} {peak:12.4}", a * 1e3, b * 1e3, 1.0 + 2.0 * a / b);
    }

    // Along the load-free axis the hole's influence decays to the nominal stress.
    let sol = HoleSolution::new(Ellipse2D::circle(0.0075)?);
    for r in [1.0, 1.5, 2.0, 4.0, 6.0] {
        let x = 0.0075 * r;
        println!("x = {r:3.1} r   s_zz / s = {:.4}", sol.local_stress(x, 0.0).szz);
    }
    Ok(())
}
