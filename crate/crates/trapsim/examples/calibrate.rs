//! Table-style observable dump for geometry calibration at adjustable
//! resolution: run with e.g. `--example calibrate -- 50` for h = 50 um.

use trapsim::runner::{parse_config, Session};

fn main() {
    let res_um: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50.0);
    let traps = std::env::args().nth(2).unwrap_or_else(|| "blade,wafer,endcap,stylus,surface".into());
    let session = Session::default();
    let targets = [
        ("blade", (2.62, 6.06, 1.23e6, 1.23e6)),
        ("wafer", (3.54, 6.06, 1.32e6, 1.32e6)),
        ("endcap", (1.77, 0.66, 0.53e6, 1.06e6)),
        ("stylus", (0.03, 0.005, 0.05e6, 0.10e6)),
        ("surface", (2.08, 0.23, 2.43e6, 2.44e6)),
    ];
    for (trap, t) in targets {
        if !traps.split(',').any(|x| x == trap) { continue; }
        let cfg = parse_config(&format!("trap = \"{trap}\"\n[grid]\nresolution = {}\n", res_um * 1e-6)).unwrap();
        let start = std::time::Instant::now();
        match session.run_case(&cfg) {
            Ok(case) => {
                let r = case.report.unwrap();
                let dx = r.axes[0].depth_ev.unwrap_or(f64::NAN);
                let dy = r.axes[1].depth_ev.unwrap_or(f64::NAN);
                let fx = r.axes[0].frequency_hz.unwrap_or(f64::NAN);
                let fy = r.axes[1].frequency_hz.unwrap_or(f64::NAN);
                println!(
                    "{trap:8} depth ({dx:7.3}, {dy:7.3}) eV [ref ({:.3},{:.3})  err ({:+5.1}%,{:+5.1}%)]  f ({:6.3},{:6.3}) MHz [ref ({:.2},{:.2})  err ({:+5.1}%,{:+5.1}%)]  null ({:+.4e},{:+.4e},{:+.4e})  iters {}  {:.0}s",
                    t.0, t.1,
                    100.0*(dx/t.0-1.0), 100.0*(dy/t.1-1.0),
                    fx/1e6, fy/1e6, t.2/1e6, t.3/1e6,
                    100.0*(fx/t.2-1.0), 100.0*(fy/t.3-1.0),
                    r.null_position[0], r.null_position[1], r.null_position[2],
                    case.solve.iterations,
                    start.elapsed().as_secs_f64(),
                );
            }
            Err(e) => println!("{trap:8} FAILED: {e}"),
        }
    }
}
