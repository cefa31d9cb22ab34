use std::f64::consts::PI;
use std::sync::Arc;

use dicke_core::classical::{ground_state_energy, h_cl, sample_shell, PhasePoint};
use dicke_core::husimi::{build_projection_grid, Plane};
use dicke_core::linalg::lanczos_lowest;
use dicke_core::model::{build_efficient_hamiltonian, solve, BasisTag, EfficientBasisSpec, ModelParams, SolveOptions, Spectrum};
use dicke_core::renyi::{occupation_atomic, occupation_shell};
use dicke_core::states::{eigen_expansion, saturate_bloch, time_average_kernel, PureState, QuantumState};

#[test]
fn large_j_ground_state_approaches_classical_minimum() {
    let params = ModelParams::resonant(30.0).unwrap();
    let h = build_efficient_hamiltonian(&params, &EfficientBasisSpec::new(&params, 60)).unwrap();
    let (vals, _) = lanczos_lowest(&h, 1, 1e-10, 300).unwrap();
    let (e_cl, _) = ground_state_energy(&params);
    let eps = vals[0] / params.j();
    // Quantum corrections are O(1/j).
    assert!((eps - e_cl).abs() < 0.05, "ε_0 = {eps}");
}

#[test]
fn saved_spectrum_reproduces_occupations() {
    let params = ModelParams::resonant(3.0).unwrap();
    let spec = solve(&params, BasisTag::Fock { n_max: 60 }, &SolveOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.bin");
    spec.save(&path).unwrap();
    let loaded = Arc::new(Spectrum::load(&path).unwrap());
    let spec = Arc::new(spec);
    let grid = build_projection_grid(Plane::Atomic, 8, params.j(), None).unwrap();
    let shell = sample_shell(-0.5, 4000, 1, &params).unwrap();
    let nu = shell.volume(20).0 / (4.0 * PI * PI);
    for s in [&spec, &loaded] {
        let k = s.scaled_energies().iter().position(|&e| e > -0.5).unwrap();
        let state = QuantumState::Pure(PureState::Eigen(dicke_core::states::EigenVector::eigenstate(s.clone(), k)));
        let la = occupation_atomic(&state, 2.0, &grid, &params).unwrap().value;
        let le = occupation_shell(&state, 2.0, &shell, nu, 20).unwrap().value;
        assert!(la > 0.0 && la <= 1.0 + 1e-9);
        assert!(le > 0.0);
    }
}

#[test]
fn time_average_spreads_an_evolving_state() {
    let params = ModelParams::resonant(4.0).unwrap();
    let spec = Arc::new(solve(&params, BasisTag::Fock { n_max: 120 }, &SolveOptions::default()).unwrap());
    let x = PhasePoint::new(0.5, 0.0, -0.4, 0.0);
    let c = eigen_expansion(&x, &spec).unwrap();
    assert!((c.norm_sqr() - 1.0).abs() < 1e-6);
    let grid = build_projection_grid(Plane::Atomic, 8, params.j(), None).unwrap();
    let pure = QuantumState::Pure(PureState::Eigen(c.clone()));
    let rho = time_average_kernel(&c, 1e4).unwrap();
    assert!((rho.density_matrix().diag().iter().map(|z| z.re).sum::<f64>() - 1.0).abs() < 1e-6);
    let l0 = occupation_atomic(&pure, 2.0, &grid, &params).unwrap().value;
    let l_avg = occupation_atomic(&QuantumState::TimeAveraged(rho), 2.0, &grid, &params).unwrap().value;
    assert!(l_avg > l0, "time average {l_avg} vs initial {l0}");
    assert!(h_cl(&x, &params).unwrap() > ground_state_energy(&params).0);
}

#[test]
fn saturated_mixture_fills_the_bloch_disk() {
    let params = ModelParams::resonant(5.0).unwrap();
    let grid = build_projection_grid(Plane::Atomic, 8, params.j(), None).unwrap();
    let few = saturate_bloch(1, 1.0, 20, 7, &params).unwrap();
    let many = saturate_bloch(20, 1.0, 20, 7, &params).unwrap();
    let l_few = occupation_atomic(&few, 2.0, &grid, &params).unwrap().value;
    let l_many = occupation_atomic(&many, 2.0, &grid, &params).unwrap().value;
    assert!(l_few < 0.3 && l_many > 0.95, "{l_few} -> {l_many}");
}
