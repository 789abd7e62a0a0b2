use nalgebra::DMatrix;
use swiptopt::sdp::engine::{ConicBlock, ConicProblem, ConicRow, ConicSettings, Elems, Engine};

type RMat = DMatrix<f64>;

#[test]
#[ignore]
fn debug_dense_two_rows() {
    let g = [0.7, -0.3];
    let mut u = RMat::zeros(2, 3);
    u[(0, 0)] = 1.0;
    u[(1, 1)] = 1.0;
    u[(0, 2)] = g[0];
    u[(1, 2)] = g[1];
    let s_in = RMat::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
    let f_dense = u.transpose() * &s_in * &u;
    println!("F = {f_dense}");

    let prob = ConicProblem {
        blocks: vec![ConicBlock { dim: 3, basis: None }],
        num_scalars: 0,
        cost_blocks: vec![RMat::identity(3, 3)],
        cost_scalars: vec![],
        rows: vec![
            ConicRow {
                blocks: vec![(0, Elems::from_dense(&f_dense))],
                scalars: vec![],
                rhs: 1.0,
            },
            ConicRow {
                blocks: vec![(0, Elems::from_dense(&RMat::identity(3, 3)))],
                scalars: vec![],
                rhs: 2.0,
            },
        ],
    };
    let sol = Engine::new(&prob, ConicSettings::default()).unwrap().solve();
    println!(
        "status {:?} iters {} pobj {} dobj {} pres {:.2e} dres {:.2e} gap {:.2e}",
        sol.status, sol.iterations, sol.pobj, sol.dobj, sol.pres, sol.dres, sol.gap_rel
    );
    println!("x = {}", sol.x_blocks[0]);

    // factored version of row 0
    let fact = Elems {
        entries: vec![],
        inner: vec![(0, 0, 1.0), (0, 1, 0.2), (1, 0, 0.2), (1, 1, 0.5)],
    };
    let prob_f = ConicProblem {
        blocks: vec![ConicBlock {
            dim: 3,
            basis: Some(u.clone()),
        }],
        num_scalars: 0,
        cost_blocks: vec![RMat::identity(3, 3)],
        cost_scalars: vec![],
        rows: vec![
            ConicRow {
                blocks: vec![(0, fact)],
                scalars: vec![],
                rhs: 1.0,
            },
            ConicRow {
                blocks: vec![(0, Elems::from_dense(&RMat::identity(3, 3)))],
                scalars: vec![],
                rhs: 2.0,
            },
        ],
    };
    let sol_f = Engine::new(&prob_f, ConicSettings::default()).unwrap().solve();
    println!(
        "factored: status {:?} iters {} pobj {} dobj {} pres {:.2e} dres {:.2e} gap {:.2e}",
        sol_f.status, sol_f.iterations, sol_f.pobj, sol_f.dobj, sol_f.pres, sol_f.dres, sol_f.gap_rel
    );
}
