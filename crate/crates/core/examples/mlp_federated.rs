//! Federated MLP training with layer-wise aggregation on label-skewed data.
//!
//! Synthetic blobs by default; pass an IDX image file and label file (for
//! example MNIST) to train on those instead:
//! `cargo run --release --example mlp_federated -- train-images-idx3-ubyte train-labels-idx1-ubyte`

use adelfl::cost::{AnalysisParams, LrSchedule};
use adelfl::engine::{run_round, Aggregation, BatchRule, FederatedTask, RoundConfig};
use adelfl::rng::{stream, Domain};
use adelfl::scheduler::{optimize_schedule, ScheduleSearchSpec};
use adelfl::system::ClientProfile;
use adelfl::tasks::{make_synthetic_classification, partition_label_skew, read_idx, MlpTask};

fn main() -> adelfl::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut rng = stream(3, Domain::Task, 0, 0);
    let data = match args.as_slice() {
        [images, labels, ..] => read_idx(images.as_ref(), labels.as_ref(), Some(6000))?,
        _ => make_synthetic_classification(3000, 20, 5, 0.15, &mut rng)?,
    };
    let classes = data.num_classes().max(2);
    let (mut train, validation) = data.split_holdout(0.2, &mut rng)?;
    let users = 6;
    train.partition = partition_label_skew(&train.labels, users, 0.5, &mut rng)?;
    let widths = vec![train.feature_dim(), 32, 16, classes];
    let task = MlpTask::new(widths, train, validation)?;
    let mut model = task.init_model(&mut stream(3, Domain::Init, 0, 0))?;

    let clients: Vec<ClientProfile> = (0..users)
        .map(|u| ClientProfile::new(u, 40.0 + 30.0 * u as f64, 0.1 + 0.05 * u as f64, 1.0))
        .collect::<adelfl::Result<_>>()?;
    // hand-set constants: the bound only shapes the schedule here
    let analysis = AnalysisParams {
        rho_c: 0.05,
        rho_s: 1.0,
        grad_bound_sq: 1.0,
        het_gap: 0.1,
        delta_1: 10.0,
        lr: LrSchedule::InverseDecay { eta0: 0.5 },
        num_layers: task.num_layers(),
        num_users: users,
    };
    let rounds = 30;
    let solution = optimize_schedule(&ScheduleSearchSpec::new(60.0, rounds), &clients, &analysis, 3)?;
    let schedule = solution.schedule;

    let mut cfg = RoundConfig::new(Aggregation::LayerWise, BatchRule::Scaled, 3);
    cfg.local_iters = 5;
    println!("initial accuracy {:.3}", task.accuracy(&model));
    for t in 1..=rounds {
        let eta = 0.1;
        let out = run_round(&task, &model, &clients, schedule.deadlines[t - 1], schedule.batch_scale, t, eta, &cfg)?;
        model = out.aggregate_model;
        if t % 5 == 0 {
            println!(
                "round {t:>2}  T = {:.2}  mean depth {:.2}  accuracy {:.3}",
                schedule.deadlines[t - 1],
                out.depth_samples.iter().map(|d| d.reached_depth as f64).sum::<f64>() / users as f64,
                task.accuracy(&model)
            );
        }
    }
    Ok(())
}
