use omnice::imaging::od::{intensity_to_od, DEFAULT_I0};
use omnice::imaging::{LabelImage, RasterImage};
use omnice::mechanical::{
    apply_piecewise_affine, co_deform_mask, crack_template, fold_template, venetian_strips, venetian_template,
    DeformationTemplate, PreparedWarp,
};
use omnice::synthetic;

#[test]
fn ten_pixel_translation_moves_image_and_mask_together() {
    let (img, mask) = synthetic::tissue_with_mask(200, 160, 4);
    let t = DeformationTemplate::translation(16, 10.0 / 200.0, 10.0 / 160.0);
    let out = apply_piecewise_affine(&img, &t).unwrap();
    let m = co_deform_mask(&mask, &t).unwrap();
    for y in 10..160 {
        for x in 10..200 {
            assert_eq!(out.image.pixel(x, y), img.pixel(x - 10, y - 10), "({x}, {y})");
            assert_eq!(m.get(x, y), mask.get(x - 10, y - 10));
        }
    }
    for x in 0..200 {
        assert_eq!(out.image.pixel(x, 3), [255, 255, 255]);
        assert!(out.gap[3 * 200 + x]);
        assert_eq!(m.get(x, 3), 0);
    }
}

#[test]
fn overlapping_pieces_add_optical_density() {
    // two triangles; the second slid left so they overlap along the diagonal
    let t = DeformationTemplate {
        src: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        dst: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.75, 0.0], [0.75, 1.0], [-0.25, 1.0]],
        cells: vec![[0, 1, 2], [3, 4, 5]],
        crack_polylines: Vec::new(),
        rotation: 0.0,
    };
    t.validate().unwrap();
    let v = (255.0 * 10f64.powf(-0.4)).round() as u8;
    let img = RasterImage::filled(100, 100, [v; 3]);
    let out = apply_piecewise_affine(&img, &t).unwrap();
    let od = intensity_to_od(f64::from(v), DEFAULT_I0);
    let expected = (255.0 * 10f64.powf(-2.0 * od)).round() as u8;
    let mut seen = 0;
    for (i, &n) in out.overlap.iter().enumerate() {
        let px = out.image.data()[i * 3];
        match n {
            2 => {
                assert_eq!(px, expected);
                assert!(px.abs_diff(40) <= 1);
                seen += 1;
            }
            1 => assert_eq!(px, v),
            0 => assert_eq!(px, 255),
            _ => panic!("unexpected overlap {n}"),
        }
    }
    assert!(seen > 500);
}

#[test]
fn crack_leaves_far_markers_in_place() {
    let t = crack_template(0.04, 17);
    let warp = PreparedWarp::new(&t, 256, 256).unwrap();
    let line = &t.crack_polylines[0];
    let far = |x: usize, y: usize| {
        let p = [(x as f64 + 0.5) / 256.0, (y as f64 + 0.5) / 256.0];
        line.iter().all(|q| (q[0] - p[0]).hypot(q[1] - p[1]) > 0.45)
    };
    let mut tested = 0;
    for (x, y) in [(8, 8), (248, 8), (8, 248), (248, 248), (128, 8), (8, 128), (248, 128), (128, 248)] {
        if !far(x, y) {
            continue;
        }
        let mut mask = LabelImage::zeros(256, 256);
        mask.set(x, y, 1);
        let img = RasterImage::from_fn(256, 256, |px, py| if (px, py) == (x, y) { [0; 3] } else { [255; 3] });
        let wi = warp.render_region(&img, img.frame()).unwrap();
        let wm = warp.render_mask_region(&mask, mask.frame()).unwrap();
        assert_eq!(wi.pixel(x, y), [0; 3]);
        assert_eq!(wm.get(x, y), 1);
        tested += 1;
    }
    assert!(tested > 0);
}

#[test]
fn venetian_strip_area_tracks_beta() {
    for seed in 0..6 {
        for beta in [0.1, 0.2, 0.3, 0.4, 0.5] {
            let set = venetian_strips(beta, seed);
            let m = set.rasterize(512, 512);
            let cov = m.iter().filter(|&&b| b).count() as f64 / m.len() as f64;
            assert!((cov - beta).abs() <= 0.1 * beta, "seed {seed} beta {beta}: coverage {cov}");
        }
    }
}

#[test]
fn imported_template_warps_identically() {
    let dir = tempfile::tempdir().unwrap();
    let img = synthetic::tissue_patch(128, 96, 2);
    for t in [venetian_template(0.3, 5), fold_template(0.1, 6), crack_template(0.03, 7)] {
        let path = dir.path().join("t.txt");
        std::fs::write(&path, t.to_text()).unwrap();
        let back = DeformationTemplate::from_text(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back, t);
        assert_eq!(
            apply_piecewise_affine(&img, &back).unwrap().image,
            apply_piecewise_affine(&img, &t).unwrap().image
        );
    }
}
