//! Generate caption triples with the deterministic mock provider.
//!
//! The wire provider is a drop-in replacement. Set `CAPTION_SERVICE_URL`
//! and build it with `WireProvider::from_env(WireConfig::default())`.
//!
//! Run: `cargo run --example mock_captions`

use gmixer::captions::{CaptionProvider, CaptionRequest, ImageRef, MockProvider, PromptTemplate};

fn main() {
    let template = PromptTemplate::default();
    println!(
        "prompt for the service:\n{}\n",
        template.render_user("make the dress red")
    );

    for (id, text) in [
        ("img_007", "make the dress red"),
        ("img_108", "add a hat"),
        ("img_220", ""),
    ] {
        let request = CaptionRequest {
            query_id: format!("q_{id}"),
            image: ImageRef::Id(id.into()),
            modification_text: text.into(),
        };
        match MockProvider.generate_captions(&request) {
            Ok(c) => println!(
                "{id}\n  target:  {}\n  include: {}\n  exclude: {}",
                c.target_desc, c.include, c.exclude
            ),
            Err(e) => println!("{id}: {} (retriable: {})", e.message, e.retriable),
        }
    }
}
