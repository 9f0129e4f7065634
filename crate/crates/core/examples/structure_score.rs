//! Turns class logits into probabilities and a structure score.

use ionmorph::scoring::{aggregate_score, softmax};
use ionmorph::{StructuralClass, TargetSet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let logits = [0.2, 2.5, -1.0, 0.0, 1.1, 0.4];
    let probs = softmax(&logits)?;
    for c in StructuralClass::ALL {
        println!("{:>17}  {:.4}", c.name(), probs.get(c));
    }
    println!("argmax {}", probs.argmax().name());

    let default = aggregate_score(&probs, TargetSet::default_informative());
    println!("score over default set  {:.4}", default.value);
    let narrow: TargetSet = "structured".parse()?;
    println!("score over {{structured}}  {:.4}", aggregate_score(&probs, narrow).value);
    println!("score over all classes   {:.4}", aggregate_score(&probs, TargetSet::ALL).value);
    Ok(())
}
