use polypscan::classifier::{ball_surface, max_search_radius};
use polypscan::exec::Execution;
use polypscan::imaging::{frobenius_distance, CircularMask};
use polypscan::io::rgb_to_frame;
use polypscan::pipeline::{geometric_stage, prepare, process_gray, ExitStage};
use polypscan::synth::{self, NormalKind, PhantomSpec};
use polypscan::{classify, process_frame, FrameDecision, Label, PipelineParams};

fn gray_of(spec: &PhantomSpec) -> polypscan::Frame {
    rgb_to_frame(&synth::generate_frame(spec).unwrap().image).unwrap()
}

fn png_of(spec: &PhantomSpec) -> Vec<u8> {
    let mut bytes = Vec::new();
    image::DynamicImage::ImageRgb8(synth::generate_frame(spec).unwrap().image)
        .write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .unwrap();
    bytes
}

fn run(spec: &PhantomSpec) -> FrameDecision {
    process_gray("f", &gray_of(spec), &PipelineParams::default(), Execution::Sequential).unwrap()
}

#[test]
fn flat_mucosa_exits_at_preselection() {
    for seed in 0..5 {
        let d = run(&PhantomSpec::flat(256, seed));
        assert!(d.t_max < 3.0, "T_max {}", d.t_max);
        assert_eq!(d.exit_stage, ExitStage::Preselect);
        assert_eq!((d.r_max, d.label), (0, Label::Normal));
    }
}

#[test]
fn bubble_field_exits_at_preselection() {
    let d = run(&synth::normal_spec(NormalKind::Bubbles, 256, 11));
    assert!(d.t_max > 8.0, "T_max {}", d.t_max);
    assert_eq!(d.exit_stage, ExitStage::Preselect);
    assert_eq!((d.r_max, d.label), (0, Label::Normal));
}

#[test]
fn bubble_heavy_frames_exceed_upper_texture_bound() {
    let params = PipelineParams::default();
    let high = (0..100)
        .filter(|&seed| {
            let spec = synth::normal_spec(NormalKind::Bubbles, 256, 40_000 + seed);
            prepare(&gray_of(&spec), &params, Execution::Sequential).unwrap().t_max > params.t_high
        })
        .count();
    assert!(high >= 90, "{high}/100 bubble frames above T_U");
}

#[test]
fn round_bump_of_radius_forty_is_a_polyp() {
    let params = PipelineParams::default();
    assert_eq!(params.r_p, 37);
    let d = run(&synth::polyp_spec(256, 40.0, 7));
    println!("r_max {} t_max {}", d.r_max, d.t_max);
    assert!(d.preselect);
    assert_eq!(d.label, Label::Polyp, "R_max {}", d.r_max);
    let w = d.winning_feature().expect("winning feature");
    assert!(w.kept && w.ball.is_some());
}

#[test]
fn identical_bytes_give_identical_decisions() {
    let params = PipelineParams::default();
    let bytes = png_of(&synth::polyp_spec(256, 30.0, 3));
    let a = process_frame("x", &bytes, &params).unwrap();
    let b = process_frame("x", &bytes, &params).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn decision_round_trips_through_json() {
    let d = run(&synth::polyp_spec(256, 28.0, 12));
    let text = serde_json::to_string(&d).unwrap();
    let back: FrameDecision = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string(&back).unwrap(), text);
}

#[test]
fn every_fit_is_optimal_over_the_scan() {
    let params = PipelineParams::default();
    let mask = CircularMask::new(params.nx, params.ny, params.r_mask).unwrap();
    let mut checked = 0;
    for seed in 0..6 {
        let spec = if seed % 2 == 0 {
            synth::polyp_spec(256, 20.0 + 3.0 * seed as f64, 300 + seed)
        } else {
            synth::normal_spec(NormalKind::TexturedFolds, 256, 300 + seed)
        };
        let prepared = prepare(&gray_of(&spec), &params, Execution::Sequential).unwrap();
        let out = geometric_stage(&prepared.f, &params, Execution::Sequential).unwrap();
        for fit in out.features.iter().filter_map(|f| f.ball) {
            let c = (fit.center.cx, fit.center.cy);
            for r in 1..=max_search_radius(params.nx) {
                let d = frobenius_distance(&out.u.u, &ball_surface(r, c, params.nx, params.ny).unwrap(), &mask).unwrap();
                assert!(d >= fit.objective - 1e-12 * fit.objective.max(1.0), "R {r} beats R_opt {}", fit.r_opt);
                if r < fit.r_opt {
                    assert!(d > fit.objective, "tie at {r} should have won over {}", fit.r_opt);
                }
            }
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn raising_the_threshold_never_creates_polyps() {
    for r_max in [0, 5, 36, 37, 60] {
        let mut was_polyp = true;
        for r_p in 1..90 {
            let is_polyp = classify(r_max, r_p).unwrap() == Label::Polyp;
            assert!(was_polyp || !is_polyp);
            was_polyp = is_polyp;
        }
    }
}

#[test]
fn frame_with_wrong_size_is_an_input_error() {
    let gray = gray_of(&PhantomSpec::flat(128, 1));
    let err = process_gray("f", &gray, &PipelineParams::default(), Execution::Sequential).unwrap_err();
    assert_eq!(err.kind(), "input");
}
