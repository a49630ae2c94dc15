//! Energy, loss and adjoint checks against closed forms, finite differences
//! and the reference solver.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dpinn::energy::{
    apply_hard_bc, assemble_global, displacement_gradient, external_work, field_pipeline, loss, loss_backward,
    strain_energy, LoadTable, Material,
};
use dpinn::fem_oracle::solve;
use dpinn::model::NetworkSpec;
use dpinn::presets;
use dpinn::problem::{InterfaceSpec, Problem, Subdomain};

fn net() -> NetworkSpec {
    NetworkSpec::new(2)
}

/// One element per subdomain; the second is a narrower block whose left
/// nodes land inside the first block's right edge.
fn two_element_problem() -> Problem {
    let a = Subdomain::new(presets::block([0.0, 0.0], [1.0, 1.0], [1, 1]).unwrap(), 0)
        .clamp("left")
        .unwrap();
    let b = Subdomain::new(presets::block([1.0, 0.25], [0.8, 0.5], [1, 1]).unwrap(), 1)
        .load("right", &[2.0, -3.0])
        .unwrap();
    Problem::new(
        Material::plane_stress(50.0, 0.25),
        vec![a, b],
        vec![net(), net()],
        &[InterfaceSpec::new(1, "left", 0)],
    )
    .unwrap()
}

fn random_fields(problem: &Problem, rng: &mut ChaCha8Rng) -> Vec<Array2<f64>> {
    problem
        .subdomains()
        .iter()
        .map(|s| Array2::from_shape_fn((s.mesh.node_count(), 2), |_| rng.random_range(-0.1..0.1)))
        .collect()
}

#[test]
fn unit_square_uniaxial_energy() {
    let sub = Subdomain::new(presets::block([0.0, 0.0], [1.0, 1.0], [1, 1]).unwrap(), 0);
    let p = Problem::new(Material::plane_stress(1.0, 0.0), vec![sub], vec![net()], &[]).unwrap();
    let coords = p.global_coordinates();
    let u = Array2::from_shape_fn((4, 2), |(i, c)| if c == 0 { coords[[i, 0]] } else { 0.0 });
    assert!((strain_energy(&u, &p) - 0.5).abs() < 1e-14);
    assert_eq!(strain_energy(&Array2::zeros((4, 2)), &p), 0.0);
}

#[test]
fn affine_elements_integrate_linear_fields_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let base = presets::block([0.0, 0.0], [2.0, 1.0], [3, 2]).unwrap();
    let skew = 0.3;
    let nodes = base
        .nodes()
        .iter()
        .map(|n| dpinn::mesh::Node {
            id: n.id,
            coords: vec![n.coords[0] + skew * n.coords[1], n.coords[1]],
        })
        .collect();
    let mesh = dpinn::mesh::Mesh::new(2, nodes, base.elements().to_vec(), base.node_sets().clone()).unwrap();
    let material = Material::plane_strain(7.0, 0.3);
    let p = Problem::new(material, vec![Subdomain::new(mesh, 0)], vec![net()], &[]).unwrap();
    let g: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let coords = p.global_coordinates();
    let u = Array2::from_shape_fn(coords.dim(), |(i, c)| {
        g[2 * c] * coords[[i, 0]] + g[2 * c + 1] * coords[[i, 1]]
    });
    let eps = [g[0], g[3], g[1] + g[2]];
    let sigma = dpinn::energy::constitutive(&eps, &material);
    let area = 2.0;
    let exact = 0.5 * area * eps.iter().zip(&sigma).map(|(a, b)| a * b).sum::<f64>();
    assert!((strain_energy(&u, &p) - exact).abs() <= 1e-12 * exact);
}

#[test]
fn rigid_motion_has_no_energy() {
    let p = presets::nonconforming_pair(1.0, &net()).unwrap();
    let coords = p.global_coordinates();
    let theta = 1e-2;
    let u = Array2::from_shape_fn(coords.dim(), |(i, c)| {
        if c == 0 {
            0.3 - theta * coords[[i, 1]]
        } else {
            -0.7 + theta * coords[[i, 0]]
        }
    });
    let e = p.material().youngs_modulus;
    assert!(strain_energy(&u, &p) <= 1e-12 * e * 2.0);
}

#[test]
fn external_work_examples() {
    let mut loads = LoadTable::default();
    loads.0.insert(0, vec![0.0, -1.0]);
    let sub = Subdomain {
        loads,
        ..Subdomain::new(presets::block([0.0, 0.0], [1.0, 1.0], [1, 1]).unwrap(), 0)
    };
    let p = Problem::new(Material::plane_stress(1.0, 0.0), vec![sub], vec![net()], &[]).unwrap();
    let mut u = Array2::zeros((4, 2));
    assert_eq!(external_work(&u, &p), 0.0);
    u[[0, 1]] = -0.5;
    assert_eq!(external_work(&u, &p), 0.5);

    let single = presets::cantilever(4, 2, 1.0, &net()).unwrap();
    let double = presets::cantilever(4, 2, 2.0, &net()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let u = Array2::from_shape_fn((single.total_nodes(), 2), |_| rng.random_range(-1.0..1.0));
    assert!((external_work(&u, &double) - 2.0 * external_work(&u, &single)).abs() < 1e-14);
}

#[test]
fn overlapping_load_and_dirichlet_rejected() {
    let mesh = presets::block([0.0, 0.0], [1.0, 1.0], [2, 2]).unwrap();
    let sub = Subdomain::new(mesh, 0)
        .clamp("left")
        .unwrap()
        .load("left", &[1.0, 0.0])
        .unwrap();
    assert!(Problem::new(Material::plane_stress(1.0, 0.2), vec![sub], vec![net()], &[]).is_err());
}

#[test]
fn assembly_and_hard_bc_examples() {
    let p = two_element_problem();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let raw = random_fields(&p, &mut rng);
    let assembled = assemble_global(&raw, p.constraints()).unwrap();
    assert_eq!(assembled.nrows(), 8);
    let parts = p.split_global(&assembled);
    assert_eq!(p.constraints().max_jump(&parts).unwrap(), 0.0);
    let u = apply_hard_bc(&assembled, &p);
    for &n in p.subdomains()[0].mesh.node_set("left").unwrap() {
        assert_eq!(u.row(n).to_vec(), vec![0.0, 0.0]);
    }
    let free = presets::cantilever(2, 1, 1.0, &net()).unwrap();
    let x = Array2::from_elem((6, 2), 0.25);
    let only = Problem::with_constraints(
        *free.material(),
        vec![Subdomain::new(free.subdomains()[0].mesh.clone(), 0)],
        vec![net()],
        Default::default(),
    )
    .unwrap();
    assert_eq!(
        assemble_global(std::slice::from_ref(&x), only.constraints()).unwrap(),
        x
    );
    assert_eq!(apply_hard_bc(&x, &only), x);
}

#[test]
fn loss_is_energy_minus_work() {
    let p = two_element_problem();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let state = loss(&random_fields(&p, &mut rng), &p).unwrap();
    let r = state.report;
    assert_eq!(r.loss, r.strain_energy - r.external_work);
    let zero: Vec<Array2<f64>> = p
        .subdomains()
        .iter()
        .map(|s| Array2::zeros((s.mesh.node_count(), 2)))
        .collect();
    assert_eq!(loss(&zero, &p).unwrap().report.loss, 0.0);
}

#[test]
fn gradient_at_zero_is_negative_load() {
    let p = two_element_problem();
    let zero: Vec<Array2<f64>> = p
        .subdomains()
        .iter()
        .map(|s| Array2::zeros((s.mesh.node_count(), 2)))
        .collect();
    let state = loss(&zero, &p).unwrap();
    let grads = loss_backward(&state, &p).unwrap();
    for (s, (g, sub)) in grads.iter().zip(p.subdomains()).enumerate() {
        for n in 0..sub.mesh.node_count() {
            let want = sub
                .loads
                .0
                .get(&n)
                .map(|f| vec![-f[0], -f[1]])
                .unwrap_or(vec![0.0, 0.0]);
            assert_eq!(g.row(n).to_vec(), want, "subdomain {s} node {n}");
        }
    }
}

#[test]
fn full_chain_gradient_matches_finite_differences() {
    let p = two_element_problem();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let raw = random_fields(&p, &mut rng);
    let grads = loss_backward(&loss(&raw, &p).unwrap(), &p).unwrap();
    for &n in p.subdomains()[0].mesh.node_set("left").unwrap() {
        assert_eq!(grads[0].row(n).to_vec(), vec![0.0, 0.0]);
    }
    for r in &p.constraints().records {
        assert_eq!(grads[r.slave_subdomain].row(r.slave_node).to_vec(), vec![0.0, 0.0]);
    }
    let h = 1e-6;
    for _ in 0..20 {
        let dir = random_fields(&p, &mut rng);
        let shifted = |sign: f64| {
            let f: Vec<Array2<f64>> = raw.iter().zip(&dir).map(|(a, d)| a + &(d * (sign * h))).collect();
            loss(&f, &p).unwrap().report.loss
        };
        let fd = (shifted(1.0) - shifted(-1.0)) / (2.0 * h);
        let analytic: f64 = grads.iter().zip(&dir).map(|(g, d)| (g * d).sum()).sum();
        assert!((fd - analytic).abs() <= 1e-6 * analytic.abs(), "fd {fd} vs {analytic}");
    }
}

#[test]
fn reference_solution_is_stationary() {
    let p = presets::cantilever(8, 4, 1e7, &net()).unwrap();
    let u = solve(&p).unwrap().displacement;
    let g = displacement_gradient(&u, &p);
    let dir = &p.subdomains()[0].dirichlet;
    let worst = (0..p.total_nodes())
        .filter(|n| !dir.contains(*n))
        .flat_map(|n| g.row(n).to_vec())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let load_inf = p.subdomains()[0]
        .loads
        .0
        .values()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst <= 1e-8 * load_inf, "{worst:e} vs {load_inf:e}");
}

#[test]
fn reference_minimizes_the_loss_over_admissible_perturbations() {
    let p = presets::nonconforming_pair(1e7, &net()).unwrap();
    let u = solve(&p).unwrap().displacement;
    let parts = p.split_global(&u);
    let fields = field_pipeline(&parts, &p).unwrap();
    assert!((&fields.displacement - &u).iter().all(|v| v.abs() <= 1e-15));
    let base = loss(&parts, &p).unwrap().report.loss;
    assert!(base < 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let scale = rng.random_range(1e-6..1e-2);
        let perturbed: Vec<Array2<f64>> = parts
            .iter()
            .map(|a| a + &Array2::from_shape_fn(a.dim(), |_| scale * rng.random_range(-1.0..1.0)))
            .collect();
        assert!(loss(&perturbed, &p).unwrap().report.loss >= base);
    }
}
