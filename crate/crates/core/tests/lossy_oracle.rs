use num_complex::Complex;
use trispdc::fock::{annihilation, build_hamiltonian, ensemble_expectation, evolve_lossy, number};
use trispdc::{FockSpace, FockState, Process};

type C = Complex<f64>;

fn dense(space: &FockSpace, m: &trispdc::fock::sparse::CsrMatrix<f64>) -> Vec<C> {
    let d = space.dim();
    let mut out = vec![C::new(0.0, 0.0); d * d];
    for (r, c, v) in m.triplets() {
        out[r * d + c] += v;
    }
    out
}

fn mul(a: &[C], b: &[C], d: usize) -> Vec<C> {
    let mut out = vec![C::new(0.0, 0.0); d * d];
    for i in 0..d {
        for k in 0..d {
            let x = a[i * d + k];
            if x.norm_sqr() == 0.0 {
                continue;
            }
            for j in 0..d {
                out[i * d + j] += x * b[k * d + j];
            }
        }
    }
    out
}

fn dagger(a: &[C], d: usize) -> Vec<C> {
    let mut out = vec![C::new(0.0, 0.0); d * d];
    for i in 0..d {
        for j in 0..d {
            out[j * d + i] = a[i * d + j].conj();
        }
    }
    out
}

/// Right-hand side of the master equation with jump operators `√κ a`.
fn lindblad(rho: &[C], h: &[C], jumps: &[(f64, Vec<C>, Vec<C>)], d: usize) -> Vec<C> {
    let i = C::new(0.0, 1.0);
    let hr = mul(h, rho, d);
    let rh = mul(rho, h, d);
    let mut out: Vec<C> = hr.iter().zip(&rh).map(|(a, b)| -i * (a - b)).collect();
    for (k, a, ad) in jumps {
        let ara = mul(&mul(a, rho, d), ad, d);
        let n = mul(ad, a, d);
        let nr = mul(&n, rho, d);
        let rn = mul(rho, &n, d);
        for idx in 0..d * d {
            out[idx] += *k * (ara[idx] - 0.5 * (nr[idx] + rn[idx]));
        }
    }
    out
}

#[test]
fn jump_trajectories_reproduce_master_equation() {
    let space = FockSpace::new(&[6, 6]).unwrap();
    let d = space.dim();
    let eff = Process::TwoMode.canonical(&[6.1, 7.5], 0.8, 0.4);
    let hop = build_hamiltonian(&space, &eff).unwrap();
    let kappas = [0.6, 0.25];
    let duration = 1.2;

    let h = dense(&space, &hop.matrix);
    let jumps: Vec<(f64, Vec<C>, Vec<C>)> = kappas
        .iter()
        .enumerate()
        .map(|(m, &k)| {
            let a = dense(&space, &annihilation::<f64>(&space, m).unwrap().matrix);
            let ad = dagger(&a, d);
            (k, a, ad)
        })
        .collect();
    let mut rho = vec![C::new(0.0, 0.0); d * d];
    rho[0] = C::new(1.0, 0.0);
    let steps = 2400;
    let dt = duration / steps as f64;
    for _ in 0..steps {
        let k1 = lindblad(&rho, &h, &jumps, d);
        let y: Vec<C> = rho
            .iter()
            .zip(&k1)
            .map(|(r, k)| r + k * (dt / 2.0))
            .collect();
        let k2 = lindblad(&y, &h, &jumps, d);
        let y: Vec<C> = rho
            .iter()
            .zip(&k2)
            .map(|(r, k)| r + k * (dt / 2.0))
            .collect();
        let k3 = lindblad(&y, &h, &jumps, d);
        let y: Vec<C> = rho.iter().zip(&k3).map(|(r, k)| r + k * dt).collect();
        let k4 = lindblad(&y, &h, &jumps, d);
        for idx in 0..d * d {
            rho[idx] += (k1[idx] + 2.0 * k2[idx] + 2.0 * k3[idx] + k4[idx]) * (dt / 6.0);
        }
    }
    let trace: f64 = (0..d).map(|i| rho[i * d + i].re).sum();
    assert!((trace - 1.0).abs() < 1e-9);

    let ens = evolve_lossy(&FockState::vacuum(&space), &hop, &kappas, duration, 3000, 5).unwrap();
    for m in 0..2 {
        let n = number::<f64>(&space, m).unwrap();
        let nd = dense(&space, &n.matrix);
        let exact: f64 = (0..d).map(|i| mul(&nd, &rho, d)[i * d + i].re).sum();
        let est = ensemble_expectation(&ens, &n).unwrap();
        let z = (est.mean.re - exact) / est.std_error;
        assert!(exact > 0.05, "mode {m}: {exact}");
        assert!(
            z.abs() < 5.0,
            "mode {m}: trajectories {} ± {} vs master equation {exact}",
            est.mean.re,
            est.std_error
        );
    }
}
