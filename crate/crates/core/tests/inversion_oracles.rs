use std::f64::consts::PI;

use mre_core::grid::Grid;
use mre_core::inversion::{
    curl_filter, invert, laplacian, region_stats, CVec3, LaplacianField, SpectralField, StencilKind,
};
use mre_core::material::KelvinVoigt;
use num_complex::Complex64;
use proptest::prelude::*;

const I: Complex64 = Complex64::new(0.0, 1.0);

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

/// `u = p exp(-i k n.x)` with `p` orthogonal to `n`.
fn plane_wave(k: Complex64, n: [f64; 3], p: [f64; 3]) -> impl Fn([f64; 3]) -> CVec3 + Sync {
    move |x| {
        let phase = (-I * k * (n[0] * x[0] + n[1] * x[1] + n[2] * x[2])).exp();
        [phase * p[0], phase * p[1], phase * p[2]]
    }
}

fn all(g: &Grid) -> Vec<bool> {
    vec![true; g.node_count()]
}

#[test]
fn kelvin_voigt_plane_wave_with_exact_laplacian() {
    let m = KelvinVoigt::BASELINE;
    let w = 2.0 * PI * 50.0;
    let g_true = m.complex_modulus(w);
    let k = m.wavenumber(w);
    assert!(k.re > 0.0 && k.im < 0.0);
    let g = Grid::new([0.1; 3], [9; 3]).unwrap();
    let f = plane_wave(k, [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
    let s = SpectralField::from_fn(g, w, &f).unwrap();
    let lap = LaplacianField::analytic(g, |x| f(x).map(|c| -k * k * c));
    let e = invert(&s, &lap, &vec![m.rho; g.node_count()], None).unwrap();
    assert_eq!(e.valid_count(), g.node_count());
    for v in &e.values {
        let v = v.unwrap();
        assert!((v.re - g_true.re).abs() <= 1e-10 * g_true.re);
        assert!((v.im - g_true.im).abs() <= 1e-10 * g_true.im);
    }
    let st = region_stats(&e, &all(&g), 0, None, g_true).unwrap();
    assert!(st.delta_storage < 1e-8 && st.delta_loss < 1e-8);
}

fn elastic_line(kh: f64, stencil: StencilKind) -> (f64, f64) {
    let n = 21;
    let g = Grid::new([0.1; 3], [n; 3]).unwrap();
    let h = g.spacing()[0];
    let mu = 2500.0;
    let rho: f64 = 1000.0;
    let k = kh / h;
    let w = k * (mu / rho).sqrt();
    let s = SpectralField::from_fn(g, w, plane_wave(Complex64::new(k, 0.0), [1.0, 0.0, 0.0], [0.0, 0.0, 1.0])).unwrap();
    let e = invert(&s, &laplacian(&s, stencil), &vec![rho; g.node_count()], None).unwrap();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in e.values.iter().flatten() {
        lo = lo.min(v.re / mu);
        hi = hi.max(v.re / mu);
        assert!(v.im.abs() <= 1e-9 * mu);
    }
    (lo, hi)
}

#[test]
fn stencil_bias_law_for_elastic_waves() {
    for kh in [0.2, 0.5, 1.0] {
        let nested = (kh / f64::sin(kh)).powi(2);
        let standard = (kh / 2.0 / f64::sin(kh / 2.0)).powi(2);
        let (lo, hi) = elastic_line(kh, StencilKind::Nested);
        assert!((lo / nested - 1.0).abs() <= 1e-6 && (hi / nested - 1.0).abs() <= 1e-6, "nested kh={kh}: {lo}..{hi} vs {nested}");
        let (lo, hi) = elastic_line(kh, StencilKind::Standard);
        assert!((lo / standard - 1.0).abs() <= 1e-6 && (hi / standard - 1.0).abs() <= 1e-6, "standard kh={kh}: {lo}..{hi} vs {standard}");
        assert!(nested > 1.0 && standard > 1.0);
    }
}

#[test]
fn coarse_nested_inversion_overestimates() {
    let m = KelvinVoigt::new(2500.0, 0.0, 1000.0).unwrap();
    let w = 2.0 * PI * 50.0;
    let g = Grid::new([0.1; 3], [17; 3]).unwrap();
    let k = m.wavenumber(w);
    let s = SpectralField::from_fn(g, w, plane_wave(k, [1.0, 0.0, 0.0], [0.0, 1.0, 0.0])).unwrap();
    let mut e = invert(&s, &laplacian(&s, StencilKind::Nested), &vec![m.rho; g.node_count()], None).unwrap();
    e.stencil = Some(StencilKind::Nested);
    let st = region_stats(&e, &all(&g), 2, None, m.complex_modulus(w)).unwrap();
    assert!(st.signed_storage > 0.0);
}

#[test]
fn curl_of_plane_shear_wave() {
    let g = Grid::new([0.1; 3], [15; 3]).unwrap();
    let h = g.spacing()[0];
    let k = 40.0;
    let w = 100.0;
    let s = SpectralField::from_fn(g, w, plane_wave(Complex64::new(k, 0.0), [1.0, 0.0, 0.0], [0.0, 0.0, 1.0])).unwrap();
    let q = curl_filter(&s).unwrap();
    // u = exp(-ikx) e_z: curl u = -du_z/dx e_y = ik exp(-ikx) e_y
    let discrete = I * (k * h).sin() / h;
    for node in 0..g.node_count() {
        let ijk = g.node_ijk(node);
        if (1..14).contains(&ijk[0]) && (1..14).contains(&ijk[1]) && (1..14).contains(&ijk[2]) {
            let x = g.node_position(node)[0];
            let u = (-I * k * x).exp();
            assert!(q.values[node][0].norm() < 1e-9);
            assert!(q.values[node][2].norm() < 1e-9);
            assert!((q.values[node][1] - discrete * u).norm() < 1e-9 * k);
            assert!((q.values[node][1] - I * k * u).norm() <= 0.05 * k);
        }
    }
}

#[test]
fn curl_preserves_the_recovered_modulus() {
    let m = KelvinVoigt::BASELINE;
    let w = 2.0 * PI * 50.0;
    let g = Grid::new([0.1; 3], [33; 3]).unwrap();
    let k = m.wavenumber(w);
    let s = SpectralField::from_fn(g, w, plane_wave(k, [1.0, 0.0, 0.0], [0.0, 0.0, 1.0])).unwrap();
    let q = curl_filter(&s).unwrap();
    let rho = vec![m.rho; g.node_count()];
    let direct = invert(&s, &laplacian(&s, StencilKind::Standard), &rho, None).unwrap();
    let curled = invert(&q, &laplacian(&q, StencilKind::Standard), &rho, None).unwrap();
    let node = g.node_index([16, 16, 16]);
    let (a, b) = (direct.values[node].unwrap(), curled.values[node].unwrap());
    assert!((a - b).norm() < 1e-8 * a.norm());
}

#[test]
fn longitudinal_field_is_removed_by_curl() {
    let g = Grid::new([0.1; 3], [11; 3]).unwrap();
    let s = SpectralField::from_fn(g, 1.0, plane_wave(Complex64::new(30.0, -2.0), [1.0, 0.0, 0.0], [1.0, 0.0, 0.0])).unwrap();
    let q = curl_filter(&s).unwrap();
    assert!(q.values.iter().flatten().all(|c| c.norm() < 1e-12));
}

#[test]
fn wave_nodes_are_masked_not_zeroed() {
    let g = Grid::new([0.1; 3], [17; 3]).unwrap();
    let h = g.spacing()[0];
    let k = PI / (4.0 * h);
    let s = SpectralField::from_fn(g, 10.0, |x| [zero(), Complex64::new((k * x[0]).sin(), 0.0), zero()]).unwrap();
    let e = invert(&s, &laplacian(&s, StencilKind::Standard), &vec![1000.0; g.node_count()], None).unwrap();
    for node in 0..g.node_count() {
        let [i, j, l] = g.node_ijk(node);
        let inside = [i, j, l].iter().all(|&a| (1..16).contains(&a));
        if !inside || i % 4 == 0 {
            assert!(e.values[node].is_none());
        } else {
            assert!(e.values[node].unwrap().re > 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stencil_symbols(kh in 0.05f64..1.5, axis in 0usize..3) {
        let g = Grid::new([0.1; 3], [9; 3]).unwrap();
        let h = g.spacing()[0];
        let k = kh / h;
        let mut n = [0.0; 3];
        n[axis] = 1.0;
        let mut p = [0.0; 3];
        p[(axis + 1) % 3] = 1.0;
        let s = SpectralField::from_fn(g, 1.0, plane_wave(Complex64::new(-k, 0.0), n, p)).unwrap();
        for kind in [StencilKind::Standard, StencilKind::Nested] {
            let lap = laplacian(&s, kind);
            for node in 0..g.node_count() {
                if let Some(l) = lap.get(node) {
                    let exact = -k * k * s.values[node][(axis + 1) % 3];
                    let ratio = (l[(axis + 1) % 3] / exact).re;
                    prop_assert!((ratio - kind.symbol_ratio(kh)).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn inversion_is_scale_equivariant(re in -5.0f64..5.0, im in -5.0f64..5.0, kr in 20.0f64..200.0, ki in -20.0f64..0.0) {
        prop_assume!(re.hypot(im) > 1e-3);
        let g = Grid::new([0.1; 3], [9; 3]).unwrap();
        let s = SpectralField::from_fn(g, 300.0, plane_wave(Complex64::new(kr, ki), [0.6, 0.8, 0.0], [0.0, 0.0, 1.0])).unwrap();
        let c = Complex64::new(re, im);
        let sc = s.scaled(c);
        let rho = vec![1000.0; g.node_count()];
        let a = invert(&s, &laplacian(&s, StencilKind::Nested), &rho, None).unwrap();
        let b = invert(&sc, &laplacian(&sc, StencilKind::Nested), &rho, None).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            match (x, y) {
                (Some(x), Some(y)) => prop_assert!((x - y).norm() <= 1e-9 * x.norm()),
                (None, None) => {}
                _ => prop_assert!(false, "mask changed under scaling"),
            }
        }
    }

    #[test]
    fn oblique_plane_waves_recover_the_modulus(theta in 0.0f64..PI, phi in 0.0f64..(2.0 * PI), eta in 0.0f64..3.0) {
        let m = KelvinVoigt::new(2500.0, eta, 1000.0).unwrap();
        let w = 2.0 * PI * 50.0;
        let k = m.wavenumber(w);
        let n = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
        let helper = if n[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
        let mut p = [n[1] * helper[2] - n[2] * helper[1], n[2] * helper[0] - n[0] * helper[2], n[0] * helper[1] - n[1] * helper[0]];
        let pn = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        p.iter_mut().for_each(|v| *v /= pn);
        let g = Grid::new([0.1; 3], [5; 3]).unwrap();
        let f = plane_wave(k, n, p);
        let s = SpectralField::from_fn(g, w, &f).unwrap();
        let lap = LaplacianField::analytic(g, |x| f(x).map(|c| -k * k * c));
        let e = invert(&s, &lap, &vec![1000.0; g.node_count()], None).unwrap();
        let gt = m.complex_modulus(w);
        for v in e.values.iter().flatten() {
            prop_assert!((v - gt).norm() <= 1e-10 * gt.norm());
        }
    }
}
