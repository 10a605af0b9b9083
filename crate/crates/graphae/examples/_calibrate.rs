// scratch calibration harness; not part of the deliverable
use graphae::autoencoder::{ObjectiveKind, TrainConfig};
use graphae::dataset::make_blobs;
use graphae::eval::{accuracy, kmeans, normalized_mutual_information, pca_reduce};
use graphae::graph::{build_semi_graph, AffinityGraph, GraphSpec};
use graphae::seed::{rng_from, substream_seed};
use graphae::stack::{finetune_graph_only, train_stack};
use ndarray::Array2;
use rand::Rng;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn raw_ac(classes: usize, per_class: usize, dim: usize, spread: f64, seed: u64) -> f64 {
    let ds = make_blobs(classes, per_class, dim, spread, substream_seed(seed, "dataset")).unwrap();
    let truth = ds.complete_labels().unwrap();
    let cl = kmeans(ds.x(), classes, 10, substream_seed(seed, "kmeans")).unwrap();
    accuracy(&cl.assignments, &truth).unwrap()
}

fn main() {
    let classes = 4usize;
    let per_class = 25usize;

    // step 1: spread scan for raw kmeans AC in (0.5, 0.8)
    for dim in [10usize, 16, 24, 32] {
        print!("dim {dim:3}: ");
        for spread in [0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.50] {
            let acs: Vec<f64> = (0..5).map(|s| raw_ac(classes, per_class, dim, spread, s)).collect();
            print!("s={spread:.2}:{:.3} ", mean(&acs));
        }
        println!();
    }

    // step 2: method comparison at a candidate operating point
    for (dim, spread) in [(16usize, 0.30f64), (16, 0.35), (24, 0.30), (24, 0.35), (32, 0.35)] {
        let mut raw = vec![];
        let mut pca = vec![];
        let mut plain = vec![];
        let mut gae = vec![];
        let mut sgae = vec![];
        let mut raw_mi = vec![];
        let mut pca_mi = vec![];
        let mut plain_mi = vec![];
        let mut gae_mi = vec![];
        for seed in 0..5u64 {
            let ds =
                make_blobs(classes, per_class, dim, spread, substream_seed(seed, "dataset")).unwrap();
            let truth = ds.complete_labels().unwrap();
            let kseed = substream_seed(seed, "kmeans");

            let cl = kmeans(ds.x(), classes, 10, kseed).unwrap();
            raw.push(accuracy(&cl.assignments, &truth).unwrap());
            raw_mi.push(normalized_mutual_information(&cl.assignments, &truth).unwrap());

            let hp = pca_reduce(ds.x(), classes).unwrap();
            let cl = kmeans(&hp, classes, 10, kseed).unwrap();
            pca.push(accuracy(&cl.assignments, &truth).unwrap());
            pca_mi.push(normalized_mutual_information(&cl.assignments, &truth).unwrap());

            let config = TrainConfig {
                max_iter: 200,
                seed: substream_seed(seed, "init"),
                ..TrainConfig::default()
            };
            let st = train_stack(&ds, None, &[classes], &[config.clone()], ObjectiveKind::Plain)
                .unwrap();
            let h = st.model.encode_stack(ds.x()).unwrap();
            let cl = kmeans(&h, classes, 10, kseed).unwrap();
            plain.push(accuracy(&cl.assignments, &truth).unwrap());
            plain_mi.push(normalized_mutual_information(&cl.assignments, &truth).unwrap());

            let mut best = (0.0f64, 0.0f64);
            for lambda in [0.01, 0.1, 1.0] {
                let c = TrainConfig { lambda, ..config.clone() };
                let st = train_stack(
                    &ds,
                    Some(&GraphSpec::Knn { k: 5 }),
                    &[classes],
                    &[c],
                    ObjectiveKind::Gae,
                )
                .unwrap();
                let h = st.model.encode_stack(ds.x()).unwrap();
                let cl = kmeans(&h, classes, 10, kseed).unwrap();
                let ac = accuracy(&cl.assignments, &truth).unwrap();
                let mi = normalized_mutual_information(&cl.assignments, &truth).unwrap();
                if ac > best.0 {
                    best = (ac, mi);
                }
            }
            gae.push(best.0);
            gae_mi.push(best.1);

            // sgae: 20% labels, semi graph
            let masked =
                graphae::dataset::mask_labels(&ds, 0.2, substream_seed(seed, "mask")).unwrap();
            let mut best_s = 0.0f64;
            for lambda in [0.01, 0.1, 1.0] {
                let c = TrainConfig { lambda, ..config.clone() };
                let st = train_stack(
                    &masked,
                    Some(&GraphSpec::Semi { k: 5 }),
                    &[classes],
                    &[c],
                    ObjectiveKind::Gae,
                )
                .unwrap();
                let h = st.model.encode_stack(masked.x()).unwrap();
                let cl = kmeans(&h, classes, 10, kseed).unwrap();
                let ac = accuracy(&cl.assignments, &truth).unwrap();
                if ac > best_s {
                    best_s = ac;
                }
            }
            sgae.push(best_s);
        }
        println!(
            "dim={dim} spread={spread}: raw={:.3} pca={:.3} plain={:.3} gae={:.3} sgae={:.3} | MI raw={:.3} pca={:.3} plain={:.3} gae={:.3}",
            mean(&raw), mean(&pca), mean(&plain), mean(&gae), mean(&sgae),
            mean(&raw_mi), mean(&pca_mi), mean(&plain_mi), mean(&gae_mi)
        );
    }

    // step 3: fine-tune direction (criterion 6 shape)
    for (dim, spread) in [(16usize, 0.30f64), (24, 0.35)] {
        let mut pre = vec![];
        let mut clean = vec![];
        let mut corrupt = vec![];
        for seed in 0..5u64 {
            let ds =
                make_blobs(classes, per_class, dim, spread, substream_seed(seed, "dataset")).unwrap();
            let truth = ds.complete_labels().unwrap();
            let kseed = substream_seed(seed, "kmeans");
            let configs = vec![
                TrainConfig {
                    lambda: 0.1,
                    max_iter: 150,
                    seed: substream_seed(seed, "l1"),
                    ..TrainConfig::default()
                },
                TrainConfig {
                    lambda: 0.1,
                    max_iter: 150,
                    seed: substream_seed(seed, "l2"),
                    ..TrainConfig::default()
                },
            ];
            let st = train_stack(
                &ds,
                Some(&GraphSpec::Knn { k: 5 }),
                &[8, classes],
                &configs,
                ObjectiveKind::Gae,
            )
            .unwrap();
            let h = st.model.encode_stack(ds.x()).unwrap();
            let cl = kmeans(&h, classes, 10, kseed).unwrap();
            pre.push(accuracy(&cl.assignments, &truth).unwrap());

            // zero-error graph from full labels
            let graph = build_semi_graph(&ds, 5).unwrap();
            let ft_cfg = TrainConfig {
                lambda: 1.0,
                max_iter: 60,
                seed: 0,
                ..TrainConfig::default()
            };
            let tuned = finetune_graph_only(&st.model, &ds, &graph, &ft_cfg).unwrap();
            let h = tuned.model.encode_stack(ds.x()).unwrap();
            let cl = kmeans(&h, classes, 10, kseed).unwrap();
            clean.push(accuracy(&cl.assignments, &truth).unwrap());

            // corrupt 10% of edges to cross-class pairs
            let corrupted = corrupt_graph(&graph, &truth, 0.10, substream_seed(seed, "corrupt"));
            let tuned = finetune_graph_only(&st.model, &ds, &corrupted, &ft_cfg).unwrap();
            let h = tuned.model.encode_stack(ds.x()).unwrap();
            let cl = kmeans(&h, classes, 10, kseed).unwrap();
            corrupt.push(accuracy(&cl.assignments, &truth).unwrap());
        }
        let wins_clean = pre.iter().zip(&clean).filter(|(p, c)| c >= p).count();
        let wins_corr = pre.iter().zip(&corrupt).filter(|(p, c)| c <= p).count();
        println!(
            "finetune dim={dim} spread={spread}: pre={:.3} clean={:.3} (better {}fold) corrupt={:.3} (worse {}fold)",
            mean(&pre), mean(&clean), wins_clean, mean(&corrupt), wins_corr
        );
        println!("  pre={pre:.3?}\n  clean={clean:.3?}\n  corrupt={corrupt:.3?}");
    }
}

fn corrupt_graph(graph: &AffinityGraph, labels: &[usize], fraction: f64, seed: u64) -> AffinityGraph {
    let mut rng = rng_from(seed);
    let mut v = graph.weights().clone();
    let n = v.nrows();
    let edges: Vec<(usize, usize)> = v
        .indexed_iter()
        .filter(|&(_, &w)| w != 0.0)
        .map(|((i, j), _)| (i, j))
        .collect();
    let swap_count = (edges.len() as f64 * fraction).round() as usize;
    let mut order: Vec<usize> = (0..edges.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut v2 = v.clone();
    let mut swapped = 0;
    for &e in &order {
        if swapped == swap_count {
            break;
        }
        let (i, j) = edges[e];
        let w = v[[i, j]];
        let cross: Vec<usize> = (0..n).filter(|&t| labels[t] != labels[i]).collect();
        let t = cross[rng.random_range(0..cross.len())];
        if v2[[i, t]] == 0.0 && i != t {
            v2[[i, j]] = 0.0;
            v2[[i, t]] = if w == 0.0 { 1.0 } else { w.max(0.5) };
            swapped += 1;
        }
    }
    v = v2;
    AffinityGraph::from_weights(v, graph.spec().clone()).unwrap()
}
