// temporary: exercise the suite at acceptance scale
fn main() {
    let started = std::time::Instant::now();
    let report = aden_core::gradcheck::run_suite(20260810, 20, None);
    println!("{}", report.table());
    println!("pass={} elapsed={:.1}s", report.pass(), started.elapsed().as_secs_f64());
    // a few other bases for robustness
    for base in [0u64, 1, 42, 9999] {
        let r = aden_core::gradcheck::run_suite(base, 20, None);
        let worst = r.checks.iter().map(|c| (c.max_rel_err / c.tolerance, c.name)).fold((0.0, ""), |a, b| if b.0 > a.0 { b } else { a });
        println!("base {base}: pass={} worst={} at {:.2}x tol", r.pass(), worst.1, worst.0);
    }
}
