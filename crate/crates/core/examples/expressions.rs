//! Parsing, printing and evaluating coefficient expressions.

use nonlocal_core::expr::{derivative_fd, eval, parse, Bindings, Compiled};

fn main() -> nonlocal_core::Result<()> {
    let e = parse("q11 + tanh(nq11) - 2^-2 * sin(y1)*(1+t)")?;
    println!("parsed:    {e}");
    println!("reparsed:  {}", parse(&e.to_string())?);
    println!("variables: {:?}", e.variables());

    let b = Bindings::new().with("q11", -0.4).with("nq11", 0.3).with("y1", 1.0).with("t", 0.5);
    let tree = eval(&e, &b)?;
    let compiled = Compiled::new(&e, &["t", "y1", "q11", "nq11"])?;
    let fast = compiled.eval(&[0.5, 1.0, -0.4, 0.3])?;
    println!("value: {tree} (tree) {fast} (compiled), bitwise equal {}", tree.to_bits() == fast.to_bits());

    let df = derivative_fd(&e, "nq11", &b, 1.0)?;
    println!("∂F/∂nq11 ≈ {df:.10}, sech²(0.3) = {:.10}", 1.0 / 0.3f64.cosh().powi(2));

    for bad in ["sin(", "1 +* 2", "foo(y1)"] {
        println!("{bad:10} -> {}", parse(bad).unwrap_err());
    }
    Ok(())
}
