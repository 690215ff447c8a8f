use qaoa_darbo::darbo::{Darbo, DarboConfig, RegionMode, SearchRegion, TrustRegionMode};

fn sphere(x: &[f64]) -> qaoa_darbo::Result<f64> {
    Ok(x.iter().map(|v| (v - 0.5).powi(2)).sum())
}

fn run_smoke(config: DarboConfig, steps: usize) -> Darbo {
    let mut d = Darbo::init(4, config, sphere).unwrap();
    for _ in 0..steps {
        let before = d.history().len();
        let best = d.best_observed();
        let r = d.step(sphere).unwrap();
        assert_eq!(d.history().len(), before + 1);
        assert!(d.best_observed() <= best);
        let tr = d.trust_region();
        assert!(tr.successes == 0 || tr.failures == 0);
        assert!(tr.length > 0.0);
        assert!(r.x.iter().all(|v| (0.0..=1.0).contains(v)));
        let region = d.search_region().active;
        // The proposal was drawn from the region active before the update.
        let _ = region;
    }
    d
}

fn smoke_successes(mk: impl Fn(u64) -> DarboConfig, tol: f64) -> usize {
    (0..20).filter(|&s| run_smoke(mk(s), 200).best_observed() < tol).count()
}

#[test]
fn smoke_sphere_adaptive() {
    let ok = smoke_successes(|seed| DarboConfig { seed, ..Default::default() }, 1e-3);
    assert!(ok >= 18, "{ok}/20 seeds reached f < 1e-3");
}

#[test]
fn smoke_sphere_turbo_reduction() {
    let ok = smoke_successes(|seed| DarboConfig { seed, region_mode: RegionMode::PinnedB, ..Default::default() }, 1e-3);
    assert!(ok >= 18, "{ok}/20 seeds reached f < 1e-3");
}

#[test]
fn smoke_sphere_plain_bo_reduction() {
    let mk = |seed| DarboConfig {
        seed,
        region_mode: RegionMode::PinnedB,
        trust_region: TrustRegionMode::FullBox,
        ..Default::default()
    };
    // Without a trust region the candidate set stays spread over the whole
    // box, so the attainable resolution after 200 steps is coarser.
    let ok = smoke_successes(mk, 5e-3);
    assert!(ok >= 18, "{ok}/20 seeds reached f < 5e-3");
}

#[test]
fn proposals_stay_in_active_region() {
    let mut d = Darbo::init(4, DarboConfig { seed: 3, ..Default::default() }, |x| Ok((x[0] - 0.95).powi(2) + x[1])).unwrap();
    for _ in 0..60 {
        let region: SearchRegion = d.search_region().active;
        let r = d.step(|x| Ok((x[0] - 0.95).powi(2) + x[1])).unwrap();
        assert!(region.contains(&r.x), "{:?} outside {:?}", r.x, region);
    }
}
