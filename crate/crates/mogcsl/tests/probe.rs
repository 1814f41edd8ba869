//! Exploratory probe (ignored by default): inspect what the denoising
//! classifiers learn under different budgets.

use mogcsl::envs::{generate_denoise_dataset, GOAL_DIM, STATE_DIM};
use mogcsl::gbt::{self, GbtConfig};

fn features(samples: &[mogcsl::envs::DenoiseSample], goal_dims: usize, goal_override: Option<f64>) -> Vec<f64> {
    let mut out = Vec::new();
    for s in samples {
        out.extend_from_slice(&s.state);
        for i in 0..goal_dims {
            out.push(goal_override.unwrap_or(s.goal[i]));
        }
    }
    out
}

#[test]
#[ignore]
fn probe_denoise_mechanism() {
    let n = 100_000;
    let samples = generate_denoise_dataset(n, 11);
    let n_train = 10_000;
    let (train, test) = samples.split_at(n_train);
    let train_labels: Vec<usize> = train.iter().map(|s| (s.label - 1) as usize).collect();
    let test_labels: Vec<usize> = test.iter().map(|s| (s.label - 1) as usize).collect();
    let clean_idx: Vec<usize> = (0..test.len()).filter(|&i| test[i].is_clean()).collect();

    // Reference: log-loss of predicting the train-label marginal.
    let mut marginal = vec![0.0f64; 51];
    for s in train {
        marginal[(s.label - 1) as usize] += 1.0;
    }
    for m in &mut marginal {
        *m /= train.len() as f64;
    }
    let marginal_ll: f64 = -test
        .iter()
        .map(|s| marginal[(s.label - 1) as usize].max(1e-15).ln())
        .sum::<f64>()
        / test.len() as f64;
    println!("marginal-predictor log-loss: {marginal_ll:.4}");

    for (rounds, depth, lr, sub, col) in [
        (30usize, 4usize, 0.3f64, 0.85f64, 1.0f64),
        (30, 4, 0.3, 0.7, 1.0),
    ] {
        let budget = GbtConfig {
            n_rounds: rounds,
            max_depth: depth,
            learning_rate: lr,
            subsample: sub,
            colsample: col,
            ..GbtConfig::default()
        };
        println!("== budget rounds={rounds} depth={depth} lr={lr} sub={sub} col={col}");
        for (name, goal_dims) in [("state", 0usize), ("ug", 1), ("mg", GOAL_DIM)] {
            let width = STATE_DIM + goal_dims;
            let train_f = features(train, goal_dims, None);
            let test_f = features(test, goal_dims, Some(1.0));
            let recorded_f = features(test, goal_dims, None);
            let model = gbt::fit(&train_f, width, &train_labels, 51, &budget, 0).unwrap();
            let acc = model.accuracy(&recorded_f, &test_labels);
            let deploy_acc = model.accuracy(&test_f, &test_labels);
            let ll = model.log_loss(&recorded_f, &test_labels);
            let deploy_ll = model.log_loss(&test_f, &test_labels);
            //

            let clean_f: Vec<f64> = clean_idx
                .iter()
                .flat_map(|&i| {
                    let mut row = test[i].state.clone();
                    row.extend(std::iter::repeat_n(1.0, goal_dims));
                    row
                })
                .collect();
            let clean_labels: Vec<usize> = clean_idx
                .iter()
                .map(|&i| (test[i].label - 1) as usize)
                .collect();
            let clean_acc = model.accuracy(&clean_f, &clean_labels);

            let splits = model.feature_split_counts();
            let state_splits: usize = splits[..STATE_DIM].iter().sum();
            let goal_splits: usize = splits[STATE_DIM..].iter().sum();
            println!(
                "  {name:>5}: acc {acc:.4} deploy-acc {deploy_acc:.4} ll {ll:.4} deploy-ll {deploy_ll:.4} clean-acc {clean_acc:.4} splits state/goal {state_splits}/{goal_splits}"
            );
        }
    }
}
