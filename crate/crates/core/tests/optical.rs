use omnice::optical::{make_defocus_psf, OpticalParams, PsfKernel};

fn params(defocus_um: f64) -> OpticalParams {
    OpticalParams {
        wavelengths_nm: [610.0, 540.0, 460.0],
        numerical_aperture: 0.75,
        refractive_index: 1.0,
        defocus_um,
    }
}

fn spread(k: &PsfKernel) -> f64 {
    let c = (k.size() / 2) as f64;
    let mut m = 0.0;
    for y in 0..k.size() {
        for x in 0..k.size() {
            m += k.get(x, y) * ((x as f64 - c).powi(2) + (y as f64 - c).powi(2));
        }
    }
    m
}

#[test]
fn spread_grows_along_a_fine_defocus_sweep() {
    for channel in 0..3 {
        let mut prev = -1.0;
        for step in 0..12 {
            let z = 0.5 + 0.35 * f64::from(step);
            let k = make_defocus_psf(&params(z), channel, 0.25).unwrap();
            assert!((k.sum() - 1.0).abs() < 1e-6);
            let s = spread(&k);
            assert!(s > prev, "channel {channel} z {z}: {s} <= {prev}");
            prev = s;
        }
    }
}

#[test]
fn kernels_are_centrally_symmetric() {
    let k = make_defocus_psf(&params(2.0), 1, 0.25).unwrap();
    let n = k.size();
    for y in 0..n {
        for x in 0..n {
            assert!((k.get(x, y) - k.get(n - 1 - x, n - 1 - y)).abs() < 1e-12);
            assert!((k.get(x, y) - k.get(y, x)).abs() < 1e-12);
        }
    }
}

#[test]
fn higher_aperture_focuses_tighter() {
    let narrow = make_defocus_psf(&OpticalParams { numerical_aperture: 0.4, ..params(0.0) }, 1, 0.1).unwrap();
    let wide = make_defocus_psf(&OpticalParams { numerical_aperture: 0.9, ..params(0.0) }, 1, 0.1).unwrap();
    assert!(spread(&wide) < spread(&narrow));
}
