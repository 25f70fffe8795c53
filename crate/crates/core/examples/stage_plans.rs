//! The three-stage schedule: epochs, learning rates, frozen components, active
//! objectives and optimizers for each variant, mode and scale.
//!
//! `cargo run --example stage_plans`

use isgan::disentangle::ReidMode;
use isgan::model::Variant;
use isgan::trainer::{build_default_plan, lr_at, PlanScale, ScheduleSpec};

fn main() {
    for (variant, mode, scale) in [
        (Variant::Dc, ReidMode::ShortTerm, PlanScale::Full),
        (Variant::Kl, ReidMode::LongTerm, PlanScale::Full),
        (Variant::Dc, ReidMode::ShortTerm, PlanScale::Toy { factor: 50 }),
    ] {
        println!("{variant:?} / {mode:?} / {scale:?}");
        for plan in build_default_plan(variant, mode, scale) {
            let frozen: Vec<&str> = plan.frozen.iter().map(|c| c.name()).collect();
            let losses: Vec<&str> = plan.active_losses.iter().map(|l| l.as_str()).collect();
            let optims: Vec<String> = plan.optimizers.iter().map(|(c, o)| format!("{}:{o:?}", c.name())).collect();
            println!(
                "  stage {} | {} epochs @ {:.0e} | lambda_U {} | frozen {frozen:?}\n    losses {losses:?}\n    {}",
                plan.stage,
                plan.epochs,
                plan.lr,
                plan.weights.unrelated,
                optims.join(", ")
            );
        }
    }

    let sched = ScheduleSpec::for_scale(PlanScale::Toy { factor: 50 });
    let lrs: Vec<String> = (0..6).map(|e| format!("{:.2e}", lr_at(&sched, e, 6, 2e-4))).collect();
    println!("toy stage-1 learning rates per epoch: {}", lrs.join(" "));
}
