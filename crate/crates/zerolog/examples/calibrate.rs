//! Scratch harness for picking the reference transfer constants.
//! cargo run -p zerolog --release --example calibrate -- <shift> <seed> [iters] [dim] [hidden]

use std::time::Instant;

use zerolog::data::{parse_synthetic_pair, generate_synthetic_pair, synthetic_word_vectors, SyntheticSpec};
use zerolog::embed::{EmbeddingConfig, WordVectorTable};
use zerolog::eval::{run_ablation, run_pipeline, RunSpec};
use zerolog::net::NetworkConfig;
use zerolog::train::{Hyperparams, StopCriterion};

fn env_f64(name: &str, default: f64) -> f64 {
    std::env::var(name).ok().map(|v| v.parse().unwrap()).unwrap_or(default)
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let shift: f64 = args.first().map(|s| s.parse().unwrap()).unwrap_or(0.8);
    let seed: u64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(7);
    let iters: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(300);
    let dim: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(16);
    let hidden: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(16);

    let spec = SyntheticSpec {
        templates_per_system: 40,
        vocabulary_overlap: 0.5,
        anomaly_rate: 0.3,
        session_length: (6, 12),
        shift_strength: shift,
        sessions_per_system: 2000,
        synonym_noise: env_f64("PAIR", 0.35),
        seed,
    };
    let t0 = Instant::now();
    let pair = parse_synthetic_pair(generate_synthetic_pair(&spec).unwrap()).unwrap();
    println!(
        "gen+parse {:.1}s src templates {} tgt templates {}",
        t0.elapsed().as_secs_f64(),
        pair.source_store.len(),
        pair.target_store.len()
    );

    let run = RunSpec {
        embedding: EmbeddingConfig { dimension: dim, ..EmbeddingConfig::default() },
        network: NetworkConfig {
            input_dim: dim,
            hidden_dim: hidden,
            attention_dim: hidden / 2,
            head_hidden_dim: hidden / 2,
            init_seed: 1,
        },
        hyperparams: Hyperparams {
            batch_size: env_f64("BATCH", 32.0) as usize,
            meta_batch: env_f64("MBATCH", 4.0) as usize,
            delta: env_f64("DELTA", 3e-3),
            lambda_d: env_f64("LAMBDA", 3e-3),
            beta: env_f64("BETA", 2.0),
            gamma: env_f64("GAMMA", 2.5),
            kappa: env_f64("KAPPA", 3e-3),
            meta_lr: env_f64("META_LR", 3e-3),
            inner_steps: env_f64("INNER", 1.0) as usize,
            ..Hyperparams::default()
        },
        stop: StopCriterion {
            max_iterations: iters,
            early_stop_patience: 0,
            holdout_fraction: 0.0,
        },
        seed,
        threshold: env_f64("THRESH", 0.5),
        source_fraction: 1.0,
        target_fraction: 1.0,
    };
    let table = if std::env::var("NOVECS").is_ok() {
        WordVectorTable::empty(dim)
    } else {
        synthetic_word_vectors(&spec, dim).unwrap()
    };
    println!("word vectors: {} entries", table.len());

    if std::env::var("PROBE").is_ok() {
        use std::collections::BTreeSet;
        use zerolog::embed::build_global_embeddings;
        use zerolog::parser::Label;
        let emb = build_global_embeddings(
            &[("synth-src", &pair.source_store), ("synth-tgt", &pair.target_store)],
            &table,
            &run.embedding,
            None,
        )
        .unwrap();
        // Anomaly templates: those never seen in a normal source session.
        let mut in_normal = BTreeSet::new();
        let mut in_anom = BTreeSet::new();
        for s in &pair.source.sessions {
            for &id in &s.event_ids {
                match s.label {
                    Label::Normal => in_normal.insert(id),
                    Label::Anomalous => in_anom.insert(id),
                    Label::Unlabeled => false,
                };
            }
        }
        let anom_ids: Vec<u32> = in_anom.difference(&in_normal).copied().collect();
        println!("source anomaly templates: {:?}", anom_ids);
        let cos = |a: &[f64], b: &[f64]| {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            dot / (na * nb).max(1e-12)
        };
        let anom_vecs: Vec<&[f64]> =
            anom_ids.iter().map(|&id| emb.get("synth-src", id).unwrap()).collect();
        // How close is each corresponding target anomaly template, and which
        // benign target templates crowd them?
        let render = |store: &zerolog::parser::TemplateStore, id: u32| {
            store.get(id).map(|t| t.render()).unwrap_or_default()
        };
        for (&sid, sv) in anom_ids.iter().zip(&anom_vecs) {
            let s_text = render(&pair.source_store, sid);
            let anchor = s_text.split_whitespace().next().unwrap_or("").to_string();
            let mut twin = (-1.0, String::new());
            let mut crowd = (-1.0, String::new());
            for t in pair.target_store.iter() {
                let t_text = t.render();
                let c = cos(emb.get("synth-tgt", t.id).unwrap(), sv);
                let is_twin = t_text.split_whitespace().next() == Some(anchor.as_str());
                if is_twin && c > twin.0 {
                    twin = (c, t_text.clone());
                }
                if !is_twin && c > crowd.0 {
                    crowd = (c, t_text);
                }
            }
            println!("src anomaly [{s_text}]");
            println!("   twin  {:.3} [{}]", twin.0, twin.1);
            println!("   crowd {:.3} [{}]", crowd.0, crowd.1);
        }
        // Score each target session by its closest approach to any source
        // anomaly template; sweep thresholds for the best reachable F1.
        let mut scored: Vec<(f64, bool)> = Vec::new();
        for s in &pair.target.sessions {
            let truth = pair.gold.lookup(&s.key).unwrap();
            let score = s
                .event_ids
                .iter()
                .map(|&id| {
                    let v = emb.get("synth-tgt", id).unwrap();
                    anom_vecs.iter().map(|a| cos(v, a)).fold(f64::MIN, f64::max)
                })
                .fold(f64::MIN, f64::max);
            scored.push((score, truth));
        }
        let mut best = (0.0, 0.0, 0.0, 0.0);
        for i in 0..1000 {
            let t = i as f64 / 1000.0;
            let tp = scored.iter().filter(|(s, y)| *s >= t && *y).count() as f64;
            let fp = scored.iter().filter(|(s, y)| *s >= t && !*y).count() as f64;
            let fnn = scored.iter().filter(|(s, y)| *s < t && *y).count() as f64;
            let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let r = if tp + fnn > 0.0 { tp / (tp + fnn) } else { 0.0 };
            let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            if f1 > best.1 {
                best = (t, f1, p, r);
            }
        }
        let mut anom: Vec<f64> =
            scored.iter().filter(|(_, y)| *y).map(|(s, _)| *s).collect();
        let mut norm: Vec<f64> =
            scored.iter().filter(|(_, y)| !*y).map(|(s, _)| *s).collect();
        anom.sort_by(f64::total_cmp);
        norm.sort_by(f64::total_cmp);
        let q = |v: &[f64], p: f64| v[((v.len() - 1) as f64 * p) as usize];
        println!(
            "anom scores p5 {:.3} p25 {:.3} p50 {:.3} | norm p50 {:.3} p75 {:.3} p95 {:.3}",
            q(&anom, 0.05), q(&anom, 0.25), q(&anom, 0.5),
            q(&norm, 0.5), q(&norm, 0.75), q(&norm, 0.95)
        );
        println!(
            "nearest-anomaly-template probe: best F1 {:.4} (P {:.3} R {:.3}) at cosine {:.3}",
            best.1, best.2, best.3, best.0
        );
        return;
    }

    if std::env::var("DONLY").is_ok() {
        use zerolog::data::strip_labels;
        use zerolog::embed::build_global_embeddings;
        use zerolog::eval::embed_session;
        use zerolog::net::{Batch, LossKind, NetworkParams};
        use zerolog::parser::Label;
        use zerolog::train::adam::AdamState;
        let emb = build_global_embeddings(
            &[("synth-src", &pair.source_store), ("synth-tgt", &pair.target_store)],
            &table,
            &run.embedding,
            None,
        )
        .unwrap();
        let (tgt_unlab, _) = strip_labels(&pair.target);
        let mut src = Vec::new();
        let mut src_y = Vec::new();
        for s in pair.source.sessions.iter().take(64) {
            src.push(embed_session(&s.event_ids, "synth-src", &emb, &run.embedding).0);
            src_y.push(if s.label == Label::Anomalous { 1.0 } else { 0.0 });
        }
        let tgt: Vec<_> = tgt_unlab
            .sessions
            .iter()
            .take(64)
            .map(|s| embed_session(&s.event_ids, "synth-tgt", &emb, &run.embedding).0)
            .collect();
        let src_refs: Vec<&[Vec<f64>]> = src.iter().map(|s| s.as_slice()).collect();
        let tgt_refs: Vec<&[Vec<f64>]> = tgt.iter().map(|s| s.as_slice()).collect();
        let batch = Batch { src: &src_refs, src_y: &src_y, tgt: &tgt_refs };
        let mut params = NetworkParams::init(run.network);
        let mut adam = AdamState::new(params.theta_d.len(), run.hyperparams.delta);
        for step in 0..=300 {
            let (l, g) = params.loss_and_grad(&batch, LossKind::Adversarial);
            if step % 50 == 0 {
                println!("d-only step {step:4}  adversarial {l:.4}");
            }
            let neg: Vec<f64> = g.d.iter().map(|x| -x).collect();
            adam.step(&mut params.theta_d, &neg);
        }
        return;
    }

    if std::env::var("CURVE").is_ok() {
        use zerolog::data::strip_labels;
        use zerolog::embed::build_global_embeddings;
        use zerolog::eval::embed_session;
        use zerolog::parser::Label;
        use zerolog::train::{train, TrainData, TrainEvent};
        let emb = build_global_embeddings(
            &[("synth-src", &pair.source_store), ("synth-tgt", &pair.target_store)],
            &table,
            &run.embedding,
            None,
        )
        .unwrap();
        let (tgt_unlab, _) = strip_labels(&pair.target);
        let mut src = Vec::new();
        let mut src_y = Vec::new();
        for s in &pair.source.sessions {
            src.push(embed_session(&s.event_ids, "synth-src", &emb, &run.embedding).0);
            src_y.push(if s.label == Label::Anomalous { 1.0 } else { 0.0 });
        }
        let tgt: Vec<_> = tgt_unlab
            .sessions
            .iter()
            .map(|s| embed_session(&s.event_ids, "synth-tgt", &emb, &run.embedding).0)
            .collect();
        let data = TrainData { src, src_y, tgt };
        train(&data, run.network, &run.hyperparams, &run.stop, seed, &mut |e| {
            if let TrainEvent::Iteration(r) = e {
                if r.iteration % 50 == 0 || r.iteration == 1 {
                    println!(
                        "iter {:4}  class {:.4}  domain {:.4}  task {:.4}",
                        r.iteration, r.loss_c, r.loss_ad, r.loss_task
                    );
                }
            }
        })
        .unwrap();
        return;
    }

    let t1 = Instant::now();
    let ab = run_ablation(&pair, &table, &run).unwrap();
    let t_ab = t1.elapsed().as_secs_f64();

    // Source-only: beta 0 and an empty target pool.
    let mut solo = run.clone();
    solo.hyperparams.beta = 0.0;
    let mut solo_pair = pair;
    solo_pair.target.sessions.truncate(solo_pair.target.sessions.len()); // keep eval set
    let t2 = Instant::now();
    let solo_out = {
        // beta 0 leaves the target pool unused by every loss term; keep the
        // pipeline intact so evaluation still covers the full target corpus.
        run_pipeline(&solo_pair, &table, &solo).unwrap()
    };
    let t_solo = t2.elapsed().as_secs_f64();

    let f = &ab.full.target_report;
    let n = &ab.no_meta.target_report;
    let s = &solo_out.target_report;
    println!(
        "shift {shift} seed {seed} iters {iters} dim {dim} hidden {hidden}: \
         full F1 {:.4} (P {:.3} R {:.3}) | no-meta F1 {:.4} | gap {:+.1} pts | \
         src-only F1 {:.4} | src-side F1 {:.4} | ablate {:.0}s solo {:.0}s",
        f.f1,
        f.precision,
        f.recall,
        n.f1,
        (f.f1 - n.f1) * 100.0,
        s.f1,
        ab.full.source_report.f1,
        t_ab,
        t_solo
    );
}
