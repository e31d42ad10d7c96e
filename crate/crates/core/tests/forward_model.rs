use std::f64::consts::PI;
use std::sync::OnceLock;

use mre_core::assembly::{
    absorbing_augment, assemble_global, penalty_contributions, AbsorbingSpec, DirichletSpec, DEFAULT_ABSORBING_ALPHA,
    DEFAULT_PENALTY,
};
use mre_core::grid::{Face, Grid};
use mre_core::inversion::{extract_harmonic, SpectralField};
use mre_core::material::{uniform_material, KelvinVoigt};
use mre_core::newmark::{simulate, DriveSchedule, ForwardModel, NewmarkIntegrator, NewmarkParams, State};
use mre_core::sparse::{dot, CgSettings, PcgSolver, SparseSymMatrix};
use mre_core::vessel::{discretize_vessel, unit_vessel_load, VesselSpec};
use num_complex::Complex64;

const FREQ: f64 = 50.0;
const AMP: f64 = 1e-4;

fn drive(penalty: f64) -> DirichletSpec {
    DirichletSpec { face: Face::XMin, amplitude: [0.0, 0.0, AMP], omega: 2.0 * PI * FREQ, penalty }
}

fn five_faces(thickness: f64, alpha: f64) -> AbsorbingSpec {
    AbsorbingSpec {
        thickness,
        alpha,
        faces: Face::ALL.into_iter().filter(|&f| f != Face::XMin).collect(),
    }
}

fn energy(m: &SparseSymMatrix, k: &SparseSymMatrix, s: &State) -> f64 {
    0.5 * dot(&s.v, &m.mul_vec(&s.v)) + 0.5 * dot(&s.d, &k.mul_vec(&s.d))
}

// much stiffer layers act as walls and reflect; only the working range is checked

/// Free decay of a shear pattern; returns the energy ratio after `steps`.
fn remaining_energy(alpha: f64, steps: usize) -> f64 {
    let g = Grid::new([0.1; 3], [9; 3]).unwrap();
    let mat = uniform_material(&g, KelvinVoigt::BASELINE).unwrap();
    let glob = assemble_global(&g, &mat).unwrap();
    let c = absorbing_augment(glob.damping, &g, &mat, &five_faces(0.025, alpha)).unwrap();
    let pen = penalty_contributions(&g, &drive(DEFAULT_PENALTY)).unwrap();
    let mut k = glob.stiffness;
    k.add_scaled(1.0, &pen.stiffness).unwrap();
    let dt = 1.0 / (FREQ * 32.0);
    let it =
        NewmarkIntegrator::new(glob.mass.clone(), c, k.clone(), NewmarkParams::average_acceleration(dt), CgSettings::default())
            .unwrap();

    let mut s = State::at_rest(g.dof_count());
    for n in 0..g.node_count() {
        let x = g.node_position(n);
        s.d[3 * n + 2] = AMP * (PI * x[0] / 0.1).sin();
    }
    let rhs: Vec<f64> = k.mul_vec(&s.d).iter().map(|v| -v).collect();
    s.a = PcgSolver::new(glob.mass.clone(), CgSettings::default()).unwrap().solve(&rhs).unwrap().0;
    let e0 = energy(&glob.mass, &k, &s);
    let zero = vec![0.0; g.dof_count()];
    for _ in 0..steps {
        s = it.step(&s, &zero).unwrap().0;
    }
    energy(&glob.mass, &k, &s) / e0
}

#[test]
fn absorbing_layer_drains_energy_monotonically_in_alpha() {
    let ratios: Vec<f64> = [0.0, 0.01, 0.1, 1.0].iter().map(|&a| remaining_energy(a, 64)).collect();
    assert!(ratios[0] < 1.0, "{ratios:?}");
    assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
}

/// Harmonic of the default 25^3 run, shared by the tests below.
fn desk_run() -> &'static SpectralField {
    static RUN: OnceLock<SpectralField> = OnceLock::new();
    RUN.get_or_init(|| {
        let g = Grid::new([0.1; 3], [25; 3]).unwrap();
        let mat = uniform_material(&g, KelvinVoigt::BASELINE).unwrap();
        let dir = drive(DEFAULT_PENALTY);
        let abs = five_faces(0.01, DEFAULT_ABSORBING_ALPHA);
        let model = ForwardModel {
            grid: &g,
            material: &mat,
            dirichlet: &dir,
            absorbing: Some(&abs),
            vessels: &[],
            schedule: DriveSchedule::default(),
            cg: CgSettings::default(),
        };
        let h = simulate(&model).unwrap().history;
        extract_harmonic(&h, dir.omega).unwrap()
    })
}

#[test]
fn default_penalty_holds_the_driven_face() {
    let s = desk_run();
    let g = s.grid;
    // A sin(wt) has the harmonic -iA
    let mut worst: f64 = 0.0;
    for iy in 0..25 {
        for iz in 0..25 {
            let c = s.values[g.node_index([0, iy, iz])];
            worst = worst.max((c[2] + Complex64::new(0.0, AMP)).norm()).max(c[0].norm()).max(c[1].norm());
        }
    }
    assert!(worst < 1e-3 * AMP, "trace error {:.3e} of amplitude", worst / AMP);
}

#[test]
fn interior_wavelength_matches_dispersion() {
    let n = 25;
    let s = desk_run();
    let g = s.grid;
    let kv = KelvinVoigt::BASELINE;

    // least-squares slope of the unwrapped phase along the centre line
    let mid = n / 2;
    let (mut xs, mut ph) = (vec![], vec![]);
    let mut prev: Option<f64> = None;
    for ix in 2..(n - 6) {
        let c = s.values[g.node_index([ix, mid, mid])][2];
        let mut p = c.arg();
        if let Some(q) = prev {
            while p - q > PI {
                p -= 2.0 * PI;
            }
            while p - q < -PI {
                p += 2.0 * PI;
            }
        }
        prev = Some(p);
        xs.push(g.node_position(g.node_index([ix, mid, mid]))[0]);
        ph.push(p);
    }
    let m = xs.len() as f64;
    let (mx, mp) = (xs.iter().sum::<f64>() / m, ph.iter().sum::<f64>() / m);
    let slope = xs.iter().zip(&ph).map(|(x, p)| (x - mx) * (p - mp)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let measured = 2.0 * PI / slope.abs();
    let oracle = 2.0 * PI / kv.wavenumber(s.omega).re;
    let rel = (measured - oracle).abs() / oracle;
    assert!(rel < 0.05, "wavelength {measured:.5} m vs dispersion {oracle:.5} m");
}

#[test]
fn refined_vessel_quadrature_barely_moves_the_response() {
    let g = Grid::new([0.1; 3], [17; 3]).unwrap();
    let mat = uniform_material(&g, KelvinVoigt::BASELINE).unwrap();
    let glob = assemble_global(&g, &mat).unwrap();
    let pen = penalty_contributions(&g, &drive(DEFAULT_PENALTY)).unwrap();
    let mut k = glob.stiffness;
    k.add_scaled(1.0, &pen.stiffness).unwrap();
    let solver = PcgSolver::new(k, CgSettings::default()).unwrap();
    let spec = VesselSpec {
        centerline: vec![[0.05, 0.0, 0.05], [0.05, 0.1, 0.05]],
        radius: 0.005,
        p_mean: 12500.0,
        p_amp: 2000.0,
        f_pulse: 1.0,
        phase: 0.0,
        frozen_phase: None,
    };
    let response = |na: usize, nc: usize| {
        let q = discretize_vessel(&g, &spec, na, nc).unwrap();
        solver.solve(&unit_vessel_load(&g, &q)).unwrap().0
    };
    let coarse = response(2, 16);
    let fine = response(4, 32);
    let h = g.spacing()[0];
    let (mut num, mut den) = (0.0, 0.0);
    for node in 0..g.node_count() {
        if spec.distance_to_centerline(g.node_position(node)) < spec.radius + h {
            continue;
        }
        for c in 0..3 {
            num += (fine[3 * node + c] - coarse[3 * node + c]).powi(2);
            den += fine[3 * node + c].powi(2);
        }
    }
    let rel = (num / den).sqrt();
    assert!(rel < 0.01, "quadrature refinement changed the response by {:.3}%", 100.0 * rel);
}
