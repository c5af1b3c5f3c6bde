//! Prints texture peaks and scores of generated phantoms per category.

use polypscan::exec::Execution;
use polypscan::io::rgb_to_frame;
use polypscan::pipeline::process_gray;
use polypscan::synth::{generate_frame, normal_spec, polyp_spec, NormalKind};
use polypscan::PipelineParams;

fn summarize(name: &str, rows: &[(f64, u32, bool)]) {
    let n = rows.len() as f64;
    let pre = rows.iter().filter(|r| r.2).count();
    let scored: Vec<u32> = rows.iter().map(|r| r.1).collect();
    let mut t: Vec<f64> = rows.iter().map(|r| r.0).collect();
    t.sort_by(f64::total_cmp);
    println!(
        "{name:>14}: T_max p10 {:.2} p50 {:.2} p90 {:.2} | preselect {:.0}% | r_max {:?}",
        t[(0.1 * n) as usize],
        t[(0.5 * n) as usize],
        t[((0.9 * n) as usize).min(rows.len() - 1)],
        100.0 * pre as f64 / n,
        scored
    );
}

fn main() {
    let params = PipelineParams::default();
    let count: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let run = |spec: polypscan::synth::PhantomSpec| {
        let img = generate_frame(&spec).unwrap().image;
        let gray = rgb_to_frame(&img).unwrap();
        let d = process_gray("x", &gray, &params, Execution::Parallel).unwrap();
        (d.t_max, d.r_max, d.preselect)
    };
    for kind in [NormalKind::Flat, NormalKind::Folds, NormalKind::TexturedFolds, NormalKind::Bubbles] {
        let rows: Vec<_> = (0..count).map(|s| run(normal_spec(kind, 256, 1000 + s))).collect();
        summarize(&format!("{kind:?}"), &rows);
    }
    for radius in [18.0, 25.0, 32.0, 40.0, 50.0] {
        let rows: Vec<_> = (0..count).map(|s| run(polyp_spec(256, radius, 5000 + s))).collect();
        summarize(&format!("polyp r={radius}"), &rows);
    }
}
