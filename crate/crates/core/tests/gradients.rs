use budgetdistill::divergence::{divergence_gradient, js, DivergenceKind};
use budgetdistill::env::{EpisodeModel, DEFAULT_ENUMERATION_CAP};
use budgetdistill::gradient::{boundary_margin, exact_gradient, objective, total_gradient, BaselineMode, Batch};
use budgetdistill::policy::DEFAULT_FLOOR;
use budgetdistill::tasks::random_instance;
use budgetdistill::{ConstrainedRewardSpec, Mode, RunSeed, SoftmaxPolicy};
use rand::Rng;

fn perturbed(p: &SoftmaxPolicy, idx: usize, h: f64) -> SoftmaxPolicy {
    let mut q = p.clone();
    q.logits_mut().as_mut_slice()[idx] += h;
    q
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = a.iter().chain(b).map(|x| x.abs()).fold(1e-4, f64::max);
    diff / scale
}

#[test]
fn exact_gradient_matches_differences_for_every_mode() {
    let modes = [
        Mode::Saute,
        Mode::Lagrangian(0.3),
        Mode::RewardOnly,
        Mode::KlLongHorizon,
        Mode::Unaugmented,
    ];
    let mut checked = 0;
    for draw in 0..40u64 {
        let mut rng = RunSeed(404).stream(&[draw]);
        let inst = random_instance(&mut rng, DEFAULT_FLOOR).unwrap();
        let budget = rng.random_range(0.05..2.0);
        for mode in modes {
            let spec = ConstrainedRewardSpec::default().with_budget(budget).with_mode(mode);
            let margin = boundary_margin(&inst.mdp, &inst.student, &inst.teacher, &spec, DEFAULT_ENUMERATION_CAP).unwrap();
            if margin <= 10.0 * spec.epsilon {
                continue;
            }
            let g = exact_gradient(&inst.mdp, &inst.student, &inst.teacher, &spec, DEFAULT_ENUMERATION_CAP).unwrap();
            let fd: Vec<f64> = (0..g.as_slice().len())
                .map(|i| {
                    let j = |h| {
                        objective(&inst.mdp, &perturbed(&inst.student, i, h), &inst.teacher, &spec, DEFAULT_ENUMERATION_CAP)
                            .unwrap()
                    };
                    (j(1e-5) - j(-1e-5)) / 2e-5
                })
                .collect();
            assert!(max_rel(g.as_slice(), &fd) < 1e-4, "{mode} draw {draw}: {:?} vs {fd:?}", g.as_slice());
            checked += 1;
        }
    }
    assert!(checked >= 100);
}

#[test]
fn js_gradient_matches_differences() {
    for draw in 0..20u64 {
        let inst = random_instance(&mut RunSeed(5).stream(&[draw]), DEFAULT_FLOOR).unwrap();
        for s in 0..inst.mdp.num_states() {
            let g = divergence_gradient(&inst.student, &inst.teacher, s, DivergenceKind::JensenShannon);
            let fd: Vec<f64> = (0..g.as_slice().len())
                .map(|i| {
                    let f = |h| js(&perturbed(&inst.student, i, h).action_probs(s), inst.teacher.probs(s));
                    (f(1e-5) - f(-1e-5)) / 2e-5
                })
                .collect();
            assert!(max_rel(g.as_slice(), &fd) < 1e-6);
        }
    }
}

#[test]
fn estimator_is_independent_of_thread_count() {
    let inst = random_instance(&mut RunSeed(12).stream(&[]), DEFAULT_FLOOR).unwrap();
    let spec = ConstrainedRewardSpec::default().with_budget(0.4);
    let model = EpisodeModel::new(&inst.mdp, &inst.student, &inst.teacher, &spec).unwrap();
    let trajs: Vec<_> = (0..256).map(|i| model.rollout(&mut RunSeed(1).stream(&[i]))).collect();
    let batch = Batch::new(trajs, 8).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| total_gradient(&inst.student, &inst.teacher, &batch, &spec, BaselineMode::Group).unwrap())
    };
    let one = run(1);
    assert_eq!(one.table.as_slice(), run(4).table.as_slice());
    assert_eq!(one.table.as_slice(), run(7).table.as_slice());
}

#[test]
fn normalized_baseline_rescales_per_group() {
    let inst = random_instance(&mut RunSeed(21).stream(&[]), DEFAULT_FLOOR).unwrap();
    let spec = ConstrainedRewardSpec::default().with_mode(Mode::RewardOnly);
    let model = EpisodeModel::new(&inst.mdp, &inst.student, &inst.teacher, &spec).unwrap();
    let trajs: Vec<_> = (0..16).map(|i| model.rollout(&mut RunSeed(2).stream(&[i]))).collect();
    let batch = Batch::new(trajs, 4).unwrap();
    let plain = total_gradient(&inst.student, &inst.teacher, &batch, &spec, BaselineMode::GroupNormalized).unwrap();
    assert!(plain.table.is_finite());
    assert_eq!(plain.num_trajectories, 16);
}
