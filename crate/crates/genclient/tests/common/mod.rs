#![allow(dead_code)]

use std::path::Path;

use shroomgen_core::annotate::{Annotation, AnnotationSet, ImageEntry, ImageProvenance, Rle};
use shroomgen_core::mask::Mask;
use shroomgen_genclient::DepthRef;

/// `n` annotated 32x32 images with one square instance each, plus a control
/// file per image under `dir/control`. Control files carry a PNG signature
/// followed by bytes unique to the image.
pub fn fixture(dir: &Path, n: u32) -> (Vec<DepthRef>, AnnotationSet) {
    std::fs::create_dir_all(dir.join("control")).unwrap();
    let mut set = AnnotationSet::new();
    let mut depths = Vec::new();
    for k in 0..n {
        let name = format!("scene_{k}_x{}_y28.png", 16 * k);
        let control = format!("control/{name}");
        let mut bytes = b"\x89PNG\r\n\x1a\n".to_vec();
        bytes.extend(format!("depth of {name}").bytes());
        std::fs::write(dir.join(&control), bytes).unwrap();
        let image_id = u64::from(k) + 1;
        set.images.push(ImageEntry {
            id: image_id,
            file_name: name.clone(),
            width: 32,
            height: 32,
            provenance: Some(ImageProvenance {
                scene_seed: Some(u64::from(k)),
                parent: Some(format!("scene_{k}.png")),
                origin: Some([16 * k, 28]),
            }),
        });
        let s = k % 20;
        let mask = Mask::from_fn(32, 32, |x, y| x >= s && x < s + 8 && y >= 4 && y < 12);
        set.annotations
            .push(Annotation::from_rle(image_id, image_id, &Rle::from_mask(&mask), None));
        depths.push(DepthRef {
            path: control,
            source_image: name,
            scene_seed: Some(u64::from(k)),
            origin: Some([16 * k, 28]),
            width: 32,
            height: 32,
        });
    }
    (depths, set)
}
