//! Exact cosine search over an in-memory store.
//!
//! Run: `cargo run --example exact_top_k`

use gmixer::{EmbeddingStore, UnitVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> gmixer::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dim = 32;
    let mut random =
        || UnitVector::normalize((0..dim).map(|_| StandardNormal.sample(&mut rng)).collect());

    let mut entries = Vec::new();
    for i in 0..1000 {
        entries.push((format!("img_{i:04}"), random()?));
    }
    // A duplicate: equal scores are broken by bundle position.
    entries.push(("img_dup".to_string(), entries[17].1.clone()));
    let store = EmbeddingStore::from_entries(dim, entries)?;

    let query = store.get("img_0017").unwrap().clone();
    for hit in store.top_k(&query, 5)? {
        println!("{:>3}  {:<9} {:.6}", hit.position, hit.id, hit.score);
    }

    let fresh = random()?;
    println!("\nrandom query:");
    for hit in store.top_k(&fresh, 5)? {
        println!("{:>3}  {:<9} {:.6}", hit.position, hit.id, hit.score);
    }
    Ok(())
}
