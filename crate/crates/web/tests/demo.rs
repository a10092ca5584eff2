use condiv_web::{drift_demo, gaussian_demo, permutation_demo};

#[test]
fn permutation_demo_separates_models() {
    let d = permutation_demo("A", "C", 2, 300, 1.0, 50, 1).unwrap();
    assert!(!d.result.h0_retained);
    assert_eq!(d.result.perm_stats.len(), 50);
    assert!(permutation_demo("A", "Z", 2, 150, 1.0, 50, 1).is_err());
    assert!(permutation_demo("A", "B", 2, 150, 0.0, 50, 1).is_err());
}

#[test]
fn gaussian_demo_matches_closed_form() {
    let g = gaussian_demo(0.5, 0.0, 4000, 3).unwrap();
    assert!((g.closed_form_kl - 0.5 * (4.0f64 / 3.0).ln()).abs() < 1e-12);
    assert!((g.exact_logdet - 2.0 * g.closed_form_kl).abs() < 1e-10);
    assert!((g.sampled_logdet - g.exact_logdet).abs() < 0.05);
    assert!(gaussian_demo(1.0, 0.0, 100, 1).is_err());
}

#[test]
fn drift_demo_reports_stream() {
    let d = drift_demo("A", "C", 300, 600, 100, 25, 2).unwrap();
    assert_eq!(d.y.len(), 600);
    assert!(d.events.iter().all(|e| e.detected_at >= 199));
    assert!(drift_demo("A", "C", 600, 600, 100, 25, 2).is_err());
}
