use mexp_demo::Demo;

#[test]
fn parts_add_up_to_the_clip() {
    let demo = Demo::new(1, 3, 2.0, 40.0).ok().unwrap();
    assert_eq!(demo.class_name(), "eye_left");
    let n = demo.width() * demo.height();
    for t in [0, demo.frames() / 2] {
        let orig = demo.frame(t, "original").ok().unwrap();
        let q = demo.frame(t, "low_rank").ok().unwrap();
        let e = demo.frame(t, "sparse").ok().unwrap();
        assert_eq!(orig.len(), n);
        let worst = (0..n).map(|i| (orig[i] - q[i] - e[i]).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-3, "{worst}");
    }
}

#[test]
fn projections_and_histograms() {
    let demo = Demo::new(0, 1, 2.0, 40.0).ok().unwrap();
    let h = demo.projection(4, true, true).ok().unwrap();
    let v = demo.projection(4, false, false).ok().unwrap();
    assert_eq!(h.len(), demo.height());
    assert_eq!(v.len(), demo.width());
    let hist = demo.projection_histogram(4, true, true, 5).ok().unwrap();
    assert_eq!(hist.len(), 16);
    assert!((hist.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    let tex = demo.temporal_texture("YT", true, 25).ok().unwrap();
    assert_eq!((tex.width(), tex.height()), (25, demo.height()));
    assert_eq!(tex.values().len(), 25 * demo.height());
    let raw = demo.temporal_texture("XT", false, 0).ok().unwrap();
    assert_eq!((raw.width(), raw.height()), (demo.frames(), demo.width()));
    let hist = demo.texture_histogram("XT", true, 25, 8, 3).ok().unwrap();
    assert_eq!(hist.len(), 256);
    assert!((hist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}
