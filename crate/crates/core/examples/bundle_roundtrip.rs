//! Write a GMXB embedding bundle, read it back and show what the loader
//! rejects.
//!
//! Run: `cargo run --example bundle_roundtrip`

use gmixer::store::{encode_bundle, read_bundle_header, write_bundle, HEADER_LEN};
use gmixer::{EmbeddingStore, UnitVector};

fn main() -> gmixer::Result<()> {
    let dir = std::env::temp_dir().join("gmixer-bundle-example");
    std::fs::create_dir_all(&dir).map_err(|e| gmixer::Error::InvalidInput(e.to_string()))?;
    let path = dir.join("tiny.gmxb");

    let vectors: Vec<UnitVector> = (0..3)
        .map(|axis| UnitVector::basis(4, axis))
        .collect::<gmixer::Result<_>>()?;
    write_bundle(&path, 4, ["a", "b", "c"].into_iter().zip(&vectors))?;
    let header = read_bundle_header(&path)?;
    println!(
        "{}: dim {}, {} records",
        path.display(),
        header.dim,
        header.count
    );
    let store = EmbeddingStore::load_bundle(&path)?;
    for (id, v) in store.iter() {
        println!("  {id}: {:?}", v.as_slice());
    }

    // Stored vectors are renormalized on load; a small drift is accepted.
    let drifted = encode_bundle(2, [("x", &[0.6f32, 0.8004][..])])?;
    println!(
        "\nslightly off-norm record loads: {}",
        EmbeddingStore::from_bundle_bytes(&drifted).is_ok()
    );

    let good = encode_bundle(2, [("x", &[1.0f32, 0.0][..]), ("y", &[0.0, 1.0][..])])?;
    let mut cases: Vec<(&str, Vec<u8>)> = Vec::new();
    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    cases.push(("bad magic", bad_magic));
    cases.push(("truncated", good[..good.len() - 2].to_vec()));
    let mut nan = good.clone();
    nan[HEADER_LEN + 3..HEADER_LEN + 7].copy_from_slice(&f32::NAN.to_le_bytes());
    cases.push(("NaN", nan));
    cases.push((
        "zero vector",
        encode_bundle(2, [("z", &[0.0f32, 0.0][..])])?,
    ));
    cases.push((
        "far off norm",
        encode_bundle(2, [("w", &[2.0f32, 0.0][..])])?,
    ));
    cases.push((
        "duplicate id",
        encode_bundle(2, [("d", &[1.0f32, 0.0][..]), ("d", &[0.0, 1.0][..])])?,
    ));
    for (name, bytes) in cases {
        match EmbeddingStore::from_bundle_bytes(&bytes) {
            Ok(_) => println!("{name}: accepted"),
            Err(e) => println!("{name}: [{}] {e}", e.class()),
        }
    }
    Ok(())
}
