use factcheck_web::{flow, lyapunov_slice, trajectory};

const PI: [f64; 3] = [0.1, 0.2, 0.3];

#[test]
fn slice_mirrors_under_complement() {
    // V(x) = V(1 - x), so the slice at 1 - v is the slice at v flipped on both axes.
    let res = 24;
    let a = lyapunov_slice(&PI, 0, 0.35, res).unwrap();
    let b = lyapunov_slice(&PI, 0, 0.65, res).unwrap();
    for i in 0..res {
        for j in 0..res {
            let (p, q) = (a[i * res + j], b[(res - 1 - i) * res + (res - 1 - j)]);
            assert!((p - q).abs() <= 1e-12 * (1.0 + p), "{i},{j}: {p} vs {q}");
        }
    }
}

#[test]
fn trajectory_is_deterministic_and_tracks_v() {
    let a = trajectory(&PI, 5000, 9, 50).unwrap();
    assert_eq!(a, trajectory(&PI, 5000, 9, 50).unwrap());
    assert!(a.chunks(6).all(|row| row[5].is_finite() && row[5] >= 0.0));
    assert_ne!(a, trajectory(&PI, 5000, 10, 50).unwrap());
}

#[test]
fn flow_descends() {
    let rows = flow(&PI, &[0.45, 0.35, 0.25], 10.0, 0.05).unwrap();
    let v: Vec<f64> = rows.chunks(5).map(|r| r[4]).collect();
    assert!(v.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

#[test]
fn bad_inputs_are_errors() {
    assert!(lyapunov_slice(&[0.1, 0.2], 0, 0.5, 10).is_err());
    assert!(lyapunov_slice(&PI, 3, 0.5, 10).is_err());
    assert!(lyapunov_slice(&PI, 0, 0.5, 0).is_err());
    assert!(flow(&PI, &[0.5, 0.5], 1.0, 0.1).is_err());
    assert!(trajectory(&[0.1, 1.2], 10, 0, 10).is_err());
}
