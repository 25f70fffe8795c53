//! Evaluates every objective on small tensors, including the weighted total.
//!
//! `cargo run --example loss_values`

use candle_core::{Device, Tensor};

use isgan::losses::{
    class_loss, decorrelation_loss, domain_loss, identity_loss, identity_shuffle_loss, kl_unrelated_loss,
    part_shuffle_loss, total_loss, CorrelationPenalty, GanTerms, LossTerms, LossWeights, MovingStats,
};
use isgan::model::{KlParams, PartFeatureSet, PartLayout, Variant};

fn main() -> isgan::Result<()> {
    let dev = Device::Cpu;
    let scalar = |t: &Tensor| t.to_scalar::<f64>().unwrap();

    let logits = Tensor::new(&[[2.0f64, 0.5, -1.0], [0.0, 0.0, 3.0]], &dev)?;
    let l_r = identity_loss(&[logits.clone(), logits.clone()], &[0, 2], 0.1)?;
    println!("identity loss, two parts: {:.4}", scalar(&l_r));

    let target = Tensor::full(0.5f64, (1, 3, 8, 4), &dev)?;
    let near = (&target + 0.1)?;
    let l_s = identity_shuffle_loss(&target, &target, &[near.clone(), near.clone(), near.clone(), near.clone()])?;
    let l_ps = part_shuffle_loss(&target, &target, &[near.clone(), near])?;
    println!("identity shuffling {:.4}, part shuffling {:.4}", scalar(&l_s), scalar(&l_ps));

    let kl = KlParams {
        means: vec![Tensor::new(&[[1.0f64, 0.0]], &dev)?],
        log_vars: vec![Tensor::new(&[[0.0f64, 1.0]], &dev)?],
    };
    println!("KL to N(0, I): {:.4}", scalar(&kl_unrelated_loss(&kl)?));

    let layout = PartLayout { branches: vec![1], per_part_dim: 1 };
    let x = Tensor::new(&[[1.0f64], [2.0], [3.0], [4.0]], &dev)?;
    let y = Tensor::new(&[[1.5f64], [1.0], [3.5], [4.0]], &dev)?;
    let (fr, fu) = (PartFeatureSet::new(vec![x], layout.clone())?, PartFeatureSet::new(vec![y], layout)?);
    let mut stats = MovingStats::new(1, 1, 0.1);
    stats.update(&fr, &fu)?;
    println!("decorrelation |rho|: {:.4}", scalar(&decorrelation_loss(&fr, &fu, &stats, CorrelationPenalty::Absolute)?));

    let patches = Tensor::zeros((2, 1, 2, 2), candle_core::DType::F64, &dev)?;
    let gan = |t: &Tensor| GanTerms { real: [t.clone(), t.clone()], recon: std::array::from_fn(|_| t.clone()), shuffled: [t.clone(), t.clone()] };
    let d = domain_loss(&gan(&patches))?;
    println!("domain objective {:.4}, generator term {:.4}", scalar(&d.objective), scalar(&d.generator));
    let c = class_loss(&gan(&Tensor::zeros((2, 4), candle_core::DType::F64, &dev)?), &[1, 3], 0.0)?;
    println!("class loss (uniform over 4): {:.4}", scalar(&c));

    let terms = LossTerms {
        related: Some(l_r),
        unrelated: Some(kl_unrelated_loss(&kl)?),
        shuffle: Some(l_s),
        part_shuffle: Some(l_ps),
        domain: Some(d.generator),
        class: Some(c),
    };
    for stage in 1..=3 {
        let (_, br) = total_loss(&terms, &LossWeights::for_variant(Variant::Kl), stage)?;
        let names: Vec<String> = br.entries.iter().map(|e| format!("{}×{}", e.0.as_str(), e.2)).collect();
        println!("stage {stage} total {:.4}: {}", br.total, names.join(" + "));
    }
    Ok(())
}
