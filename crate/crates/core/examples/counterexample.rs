//! An unbiased mechanism that is exact on one dataset yet has total
//! variation exactly delta between any two others.
use gammap::mechanism::{total_variation, Counterexample, Dataset};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> gammap::Result<()> {
    let x0 = Dataset::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]])?;
    let x = Dataset::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0]])?;
    let x2 = Dataset::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]])?;
    let delta = 0.05;
    let mech = Counterexample::new(&x0, delta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    println!("at X0 the output is always {:?}", mech.sample(&x0, &mut rng)?.as_slice());
    let law = mech.law(&x)?;
    println!("on X: atoms {:?} / {:?} with probabilities {:?}", law.atoms[0].as_slice(), law.atoms[1].as_slice(), law.probs);
    println!("mean on X {:?} equals mu(X) {:?}", law.mean().as_slice(), x.mean().as_slice());
    println!("TV(X, X') = {}", total_variation(&law, &mech.law(&x2)?));
    Ok(())
}
