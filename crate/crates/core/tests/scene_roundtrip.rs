use shelltrack::scene_io::{load_scene, synth_scene, SynthFamily, SynthOptions};

#[test]
fn saved_synthetic_scene_loads_back() {
    let opts = SynthOptions { frames: 3, resolution: 24, gaussians: 300, grid: 5, ..SynthOptions::default() };
    let s = synth_scene(SynthFamily::Fold { angle: 0.8, width: 0.3 }, &opts, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = s.save(dir.path()).unwrap();
    let loaded = load_scene(&path).unwrap();
    assert_eq!(loaded.scene.frames.len(), 3);
    assert_eq!(loaded.scene.camera, s.camera);
    for (a, b) in loaded.scene.frames.iter().zip(&s.frames) {
        assert!(a.data.iter().zip(&b.data).all(|(p, q)| (0..3).all(|k| (p[k] - q[k]).abs() <= 0.5 / 255.0 + 1e-12)));
    }
    let masks = loaded.scene.masks.as_ref().unwrap();
    assert!(masks[1].iter().zip(&s.masks[1]).all(|(a, b)| (a - b).abs() <= 0.5 / 255.0 + 1e-12));
    assert_eq!(loaded.config.grid, 5);
    assert_eq!(loaded.text, std::fs::read_to_string(&path).unwrap());
    let gt = shelltrack::eval::read_ply(&dir.path().join("gt_002.ply")).unwrap();
    assert_eq!(gt.positions, s.gt_clouds[1]);
}

#[test]
fn scene_without_chart_coordinates_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("t.obj"), "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
    std::fs::write(
        dir.path().join("scene.json"),
        r#"{"template": {"kind": "obj", "path": "t.obj"}, "camera": "c.txt", "frames": ["a.png", "b.png"]}"#,
    )
    .unwrap();
    let e = load_scene(&dir.path().join("scene.json")).unwrap_err();
    assert!(e.to_string().contains("template lacks chart coordinates"), "{e}");
}
