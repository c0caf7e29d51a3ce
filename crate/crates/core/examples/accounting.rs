//! Converting and composing zCDP guarantees.
use gammap::mechanism::{account, compose, PrivacyParams};

fn main() -> gammap::Result<()> {
    let a = PrivacyParams::zcdp(0.5)?;
    let b = PrivacyParams::zcdp(0.125)?;
    let total = compose(a, b)?;
    println!("composed: {total:?}");
    for delta in [1e-5, 1e-8] {
        println!("delta = {delta:e}: {:?}", account(total, delta)?);
    }
    Ok(())
}
