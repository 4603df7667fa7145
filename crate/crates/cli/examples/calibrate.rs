// Scratch parameter scan for the e2e experiment; not part of the build.

use wdistill_cli::experiments::pearson;
use wdistill_core::estimator::ConfidenceMetric;
use wdistill_core::loss::{margin_score, LossSpec};
use wdistill_core::noise::{synthetic_mixture_task, MixtureSpec};
use wdistill_core::optimize::{SamplingMode, SgdConfig, StepSchedule};
use wdistill_core::pipeline::{
    run_distillation_on_task, train_teacher, DistillConfig, LabelMode, WeightScheme,
};
use wdistill_core::rng::child_seed;

fn main() {
    let mut rows = Vec::new();
    for &classes in &[6usize, 8] {
        for &nl in &[60usize, 100, 150] {
            for &sep in &[2.2f64, 2.6, 3.0] {
                for &radius in &[4.0f64] {
                    let mut teacher_accs = Vec::new();
                    let mut improvements = Vec::new();
                    let mut corrs = Vec::new();
                    let mut caps = Vec::new();
                    for trial in 0..5u64 {
                        let task_seed = child_seed(42, 1_000 + trial);
                        let pipe_seed = child_seed(42, 2_000 + trial);
                        let task = synthetic_mixture_task(&MixtureSpec {
                            dim: 10,
                            num_classes: classes,
                            n_labeled: nl,
                            n_unlabeled: 1200,
                            n_validation: 400,
                            n_test: 2000,
                            separation: sep,
                            seed: task_seed,
                        })
                        .unwrap();
                        let sgd = |iterations: usize| SgdConfig {
                            iterations,
                            step: StepSchedule::Constant { scale: 2.0 },
                            constraint_radius: radius,
                            seed: 0,
                            sampling: SamplingMode::WithReplacement,
                            log_every: None,
                        };
                        let cfg = DistillConfig {
                            student_dim: 6,
                            label_mode: LabelMode::Hard,
                            refresh_rounds: 1,
                            weight_scheme: WeightScheme::Ours,
                            metric: ConfidenceMetric::Margin,
                            temperature: 1.0,
                            seed: pipe_seed,
                            teacher_sgd: sgd(4000),
                            pretrain_sgd: sgd(2000),
                            distill_sgd: sgd(6000),
                            log_every: 3000,
                        };
                        let report = run_distillation_on_task(&task, &cfg).unwrap();
                        let teacher = train_teacher(
                            &task.labeled,
                            &cfg.teacher_sgd,
                            &LossSpec::cross_entropy(),
                            cfg.seed,
                        )
                        .unwrap();
                        let correct: Vec<f64> = task
                            .unlabeled
                            .examples()
                            .iter()
                            .map(|ex| {
                                (teacher.classify(&ex.features)
                                    == task.ground_truth_class(&ex.features))
                                    as u8 as f64
                            })
                            .collect();
                        // Ceiling estimate from margin-decile purity.
                        let margins: Vec<f64> = task
                            .unlabeled
                            .examples()
                            .iter()
                            .map(|ex| margin_score(&teacher.predict(&ex.features, 1.0).unwrap()))
                            .collect();
                        let mut order: Vec<usize> = (0..margins.len()).collect();
                        order.sort_by(|&a, &b| margins[a].partial_cmp(&margins[b]).unwrap());
                        let chunk = margins.len() / 10;
                        let acc_mean = correct.iter().sum::<f64>() / correct.len() as f64;
                        let var_c = acc_mean * (1.0 - acc_mean);
                        let var_e: f64 = (0..10)
                            .map(|d| {
                                let idx = &order[d * chunk..(d + 1) * chunk];
                                let a: f64 =
                                    idx.iter().map(|&i| correct[i]).sum::<f64>() / chunk as f64;
                                (a - acc_mean) * (a - acc_mean)
                            })
                            .sum::<f64>()
                            / 10.0;
                        caps.push((var_e / var_c.max(1e-12)).sqrt());
                        teacher_accs.push(report.teacher_accuracy);
                        improvements.push(
                            report.primary.final_accuracy - report.unit_baseline.final_accuracy,
                        );
                        corrs.push(pearson(&report.primary.unlabeled_weights, &correct));
                    }
                    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
                    rows.push((
                        mean(&corrs),
                        format!(
                            "L{classes} nl{nl} sep{sep:.1} r{radius:.0}: teacher [{:.2},{:.2}] m {:.3} | improve {:+.4} | corr {:.3} | cap {:.3}",
                            teacher_accs.iter().cloned().fold(f64::INFINITY, f64::min),
                            teacher_accs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                            mean(&teacher_accs),
                            mean(&improvements),
                            mean(&corrs),
                            mean(&caps),
                        ),
                    ));
                }
            }
        }
    }
    rows.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    for (_, line) in rows {
        println!("{line}");
    }
}
