use rooffit_web::demo::{bend_profile, compare_segmentation, weight_field};

#[test]
fn bend_profile_keeps_residuals() {
    for spherical in [false, true] {
        let p = bend_profile(spherical, 2.0, 0.1, 3).unwrap();
        assert!(p.max_residual_change < 1e-9);
        assert!(!p.across.is_empty());
        assert_eq!(p.across.len(), p.after.len());
        assert!(p.across.windows(2).all(|w| w[0] <= w[1]));
        // the middle of the crop is raised above its rim
        let mid = p.surface[p.across.len() / 2];
        assert!(mid > p.surface[0] && mid > *p.surface.last().unwrap());
    }
}

#[test]
fn weight_field_corners() {
    let f = weight_field(0.5, 0.7, 30.0, 0.0).unwrap();
    assert_eq!(f.values.len(), f.width * f.height);
    assert!((f.values[0] - 1.0).abs() < 1e-12);
    let d = f.max_distance;
    assert!((f.values[f.width - 1] - (-(d * d) / 0.25f64).exp()).abs() < 1e-12);
    // weight falls along both axes
    assert!(f.values.windows(2).take(f.width - 1).all(|w| w[1] < w[0]));
    assert!(f.values[f.width] < f.values[0]);
    assert!(weight_field(0.0, 0.7, 30.0, 0.0).is_err());
}

#[test]
fn comparison_reports_both_methods() {
    let c = compare_segmentation(0.3, 0).unwrap();
    assert_eq!(c.x.len(), c.hierarchical.len());
    assert_eq!(c.x.len(), c.single_level.len());
    assert_eq!(c.hierarchical_count, 3);
    let max = c.hierarchical.iter().copied().max().unwrap();
    assert_eq!(max, 2);
}
