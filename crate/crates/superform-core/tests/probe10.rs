use num::Zero;
use superform_core::algebras::{admissible_space, tilde_equation_residuals, Algebra};

#[test]
fn probe_tilde_scope() {
    for alg in [Algebra::Vle36, Algebra::Mb38, Algebra::Ksle510Bar] {
        for k in -alg.depth()..=2 {
            let layer = admissible_space(alg, k);
            let pass = layer
                .iter()
                .filter(|x| {
                    tilde_equation_residuals(alg, x)
                        .unwrap()
                        .iter()
                        .all(|np| np.value.is_zero())
                })
                .count();
            println!("{:?} k={k}: {pass}/{}", alg, layer.len());
        }
    }
}
