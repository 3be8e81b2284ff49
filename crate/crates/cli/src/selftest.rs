//! Quick end-to-end checks against closed-form answers.

use koopeig::dynamics::{generate_dataset, GenerateOptions, InputPolicy, Sampler};
use koopeig::mpc::{AdmmSettings, QpSolver};
use koopeig::numerics::{jordan_exp, JordanBlock};
use koopeig::predictor::{
    b_from_bd, bd_from_b, learn, EigMode, LearnOptions, LinearPredictor, Observable,
};
use koopeig::{CMat, Mat, VectorField, C64};

use crate::commands::blob_hash;

type Check = Result<String, String>;

fn hash() -> Check {
    let h = blob_hash(b"hello\n");
    let want = "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4";
    if h == want {
        Ok(h[..12].to_string())
    } else {
        Err(format!("got {h}"))
    }
}

/// min uᵀu − 2(u1 + u2) s.t. u1 ≤ 0.5 has the solution (0.5, 1).
fn qp() -> Check {
    let h = Mat::identity(2);
    let a = Mat::from_vec(1, 2, vec![1.0, 0.0]).map_err(|e| e.to_string())?;
    let mut solver = QpSolver::new(&h, &a, AdmmSettings::default()).map_err(|e| e.to_string())?;
    let sol = solver
        .solve(&[-2.0, -2.0], &[0.5], None)
        .map_err(|e| e.to_string())?;
    let err = (sol.u[0] - 0.5).abs().max((sol.u[1] - 1.0).abs());
    if err < 1e-6 {
        Ok(format!("error {err:.1e}, {} iterations", sol.iterations))
    } else {
        Err(format!("u = {:?}", sol.u))
    }
}

/// `e^{J(t1+t2)} = e^{J t1} e^{J t2}` for a size-3 Jordan block.
fn semigroup() -> Check {
    let block = JordanBlock::new(C64::new(-0.4, 1.3), 3).map_err(|e| e.to_string())?;
    let e = |t: f64| jordan_exp(&block, t).map_err(|e| e.to_string());
    let split = e(0.7)?.matmul(&e(-1.9)?).map_err(|e| e.to_string())?;
    let err = split.sub(&e(-1.2)?).map_err(|e| e.to_string())?.max_abs();
    if err <= 1e-10 {
        Ok(format!("error {err:.1e}"))
    } else {
        Err(format!("error {err:.1e}"))
    }
}

/// Continuous and discrete input matrices convert back and forth, including `λ = 0`.
fn zoh() -> Check {
    let lambdas = [
        C64::new(0.0, 0.0),
        C64::new(-1.5, 2.0),
        C64::new(-1.5, -2.0),
    ];
    let bd = CMat::from_fn(3, 1, |i, _| C64::new(1.0 + i as f64, -0.5 * i as f64));
    let b = b_from_bd(&lambdas, &bd, 0.01).map_err(|e| e.to_string())?;
    let back = bd_from_b(&lambdas, &b, 0.01).map_err(|e| e.to_string())?;
    let err = back.sub(&bd).map_err(|e| e.to_string())?.max_abs();
    if err <= 1e-10 {
        Ok(format!("error {err:.1e}"))
    } else {
        Err(format!("error {err:.1e}"))
    }
}

/// Eigenfunction values along the data obey the one-step relation to rounding, and the
/// predictor survives a JSON round trip unchanged.
fn lift() -> Check {
    let vf = VectorField::vanderpol();
    let opts = GenerateOptions {
        n_traj: 10,
        duration: 2.0,
        ts: 0.01,
        policy: InputPolicy::None,
        seed: 7,
    };
    let ds = generate_dataset(&vf, &Sampler::Circle { radius: 0.05 }, &opts)
        .map_err(|e| e.to_string())?;
    let lo = LearnOptions {
        n: 8,
        eigmode: EigMode::Lattice,
        ..Default::default()
    };
    let (pred, _) = learn(&ds, None, &Observable::state(2), &lo).map_err(|e| e.to_string())?;
    let ulps = pred
        .lift
        .defining_property_ulps()
        .ok_or("no on-data values")?;
    if ulps > 64.0 {
        return Err(format!("defining relation off by {ulps:.1} ulps"));
    }
    let back = LinearPredictor::from_json(&pred.to_json().map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let x0 = [0.1, -0.05];
    let p1 = pred.predict(&x0, None, 50).map_err(|e| e.to_string())?;
    let p2 = back.predict(&x0, None, 50).map_err(|e| e.to_string())?;
    if p1 != p2 {
        return Err("prediction changed after JSON round trip".into());
    }
    Ok(format!("{ulps:.1} ulps"))
}

/// Runs every check and reports whether all passed.
pub fn run() -> bool {
    let checks: [(&str, fn() -> Check); 5] = [
        ("manifest hash", hash),
        ("box QP", qp),
        ("Jordan exponential semigroup", semigroup),
        ("input matrix conversion", zoh),
        ("eigenfunction lift", lift),
    ];
    let mut ok = true;
    for (name, f) in checks {
        match f() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                ok = false;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    ok
}
