//! Order-κ moment relaxations of polynomial optimization problems, flat
//! extension checks and minimizer extraction.

mod build;
mod extract;
mod verify;

pub use build::{build_moment_sdp, build_moment_sdp_with, MomentBasis, MomentSdp};
pub use extract::{check_flatness_extract, extract_on, moment_matrix, Extraction, ExtractOptions};
pub use verify::{verify, verify_with_bounds, ExtractionMode, VerdictStatus, VerificationVerdict, VerifyOptions};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyalg::{Monomial, Polynomial, VariableSpace};
    use crate::popbuild::StandardPop;
    use rcbf_sdp::{EmbeddedBackend, Residuals, SdpBackend, SdpSolution, SolverSettings, Status, SymMatrix};

    fn backend() -> EmbeddedBackend {
        EmbeddedBackend::new(SolverSettings::default())
    }

    /// Solution whose moment block holds the moments of the given atoms.
    fn atomic_solution(msdp: &MomentSdp, atoms: &[Vec<f64>], weights: &[f64]) -> SdpSolution {
        let s = msdp.basis.len();
        let mut x = SymMatrix::zeros(s);
        for i in 0..s {
            for j in i..s {
                let m = msdp.basis.monomials[i].mul(&msdp.basis.monomials[j]);
                let v: f64 = atoms
                    .iter()
                    .zip(weights)
                    .map(|(a, w)| w * m.eval(&a.iter().zip(&msdp.scale).map(|(p, q)| p / q).collect::<Vec<_>>()))
                    .sum();
                x.set(i, j, v);
            }
        }
        SdpSolution {
            status: Status::Optimal,
            x: vec![x],
            y: vec![],
            s: vec![],
            primal_objective: 0.0,
            dual_objective: 0.0,
            residuals: Residuals::default(),
            iterations: 0,
        }
    }

    #[test]
    fn basis_sizes() {
        assert_eq!(MomentBasis::new(2, 2).len(), 6);
        assert_eq!(MomentBasis::new(4, 4).len(), 70);
        let b = MomentBasis::new(3, 3);
        assert!(b.monomials[0].is_one());
        assert_eq!(b.prefix_len(1), 4);
    }

    #[test]
    fn two_point_problem() {
        let sp = VariableSpace::new(&[("y", 1)]).unwrap();
        let p = |s: &str| Polynomial::parse(&sp, s).unwrap();
        let pop = StandardPop::new(&sp, p("y"), vec![p("y^2 - 1")], vec![]).unwrap();
        let msdp = build_moment_sdp(&pop, 1).unwrap();
        assert_eq!(msdp.basis.len(), 2);
        let sol = backend().solve(&msdp.sdp).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((msdp.bound(&sol) + 1.0).abs() < 1e-6);
        let ex = check_flatness_extract(&sol, &msdp, &ExtractOptions::default()).unwrap();
        assert_eq!(ex.rank, Some(1));
        assert!((ex.atoms[0][0] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn order_too_low() {
        let sp = VariableSpace::new(&[("y", 2)]).unwrap();
        let p = |s: &str| Polynomial::parse(&sp, s).unwrap();
        let pop = StandardPop::new(&sp, p("y1^4"), vec![], vec![p("1 - y1^2 - y2^2")]).unwrap();
        assert!(matches!(
            build_moment_sdp(&pop, 1),
            Err(crate::CoreError::OrderTooLow { order: 1, min: 2 })
        ));
        assert_eq!(build_moment_sdp(&pop, 2).unwrap().basis.len(), 6);
    }

    #[test]
    fn dirac_extraction() {
        let sp = VariableSpace::new(&[("y", 2)]).unwrap();
        let p = |s: &str| Polynomial::parse(&sp, s).unwrap();
        let mut pop = StandardPop::new(&sp, p("y1"), vec![], vec![p("4 - y1^2 - y2^2")]).unwrap();
        pop.scale = vec![2.0, 0.5];
        let msdp = build_moment_sdp(&pop, 3).unwrap();
        let sol = atomic_solution(&msdp, &[vec![0.3, -0.7]], &[1.0]);
        let ex = check_flatness_extract(&sol, &msdp, &ExtractOptions::default()).unwrap();
        assert_eq!(ex.rank, Some(1));
        assert!((ex.atoms[0][0] - 0.3).abs() < 1e-8 && (ex.atoms[0][1] + 0.7).abs() < 1e-8);
    }

    #[test]
    fn three_atom_extraction() {
        let sp = VariableSpace::new(&[("y", 2)]).unwrap();
        let p = |s: &str| Polynomial::parse(&sp, s).unwrap();
        let pop = StandardPop::new(&sp, p("y1"), vec![], vec![p("4 - y1^2 - y2^2")]).unwrap();
        let msdp = build_moment_sdp(&pop, 3).unwrap();
        let pts = [vec![0.3, -0.7], vec![-1.0, 0.2], vec![0.5, 0.5]];
        let sol = atomic_solution(&msdp, &pts, &[0.2, 0.5, 0.3]);
        let ex = check_flatness_extract(&sol, &msdp, &ExtractOptions::default()).unwrap();
        assert_eq!(ex.rank, Some(3));
        for q in &pts {
            assert!(ex.atoms.iter().any(|a| (a[0] - q[0]).abs() < 1e-8 && (a[1] - q[1]).abs() < 1e-8));
        }
        let marg = extract_on(&sol, &msdp, &[1], 1, &ExtractOptions::default()).unwrap();
        assert_eq!(marg.rank, Some(3));
        assert!(marg.atoms.iter().any(|a| (a[0] - 0.2).abs() < 1e-8));
    }

    #[test]
    fn fixed_moment_rows() {
        let sp = VariableSpace::new(&[("y", 1)]).unwrap();
        let p = |s: &str| Polynomial::parse(&sp, s).unwrap();
        let pop = StandardPop::new(&sp, p("y^2"), vec![], vec![p("1 - y^2")]).unwrap();
        let fixed = [(Monomial::one(1), 1.0), (Monomial::var(1, 0), 0.5)];
        let msdp = build_moment_sdp_with(&pop, 1, &fixed).unwrap();
        let sol = backend().solve(&msdp.sdp).unwrap();
        // min L(y²) with L(y) = 0.5 is 0.25
        assert!((msdp.bound(&sol) - 0.25).abs() < 1e-6);
        assert_eq!(msdp.fixed_rows.len(), 2);
    }
}
