use proptest::prelude::*;
use shroomgen_core::annotate::rle::{decode_counts, encode_counts};
use shroomgen_core::annotate::tiling::{apply_windows, clip_rle};
use shroomgen_core::annotate::{
    build_annotation_set, crop_fixed, dataset_stats, export_coco, tile_sahi, tile_windows, AnnotationSet, Rle,
    TileSpec, VisibilityFilter, Window,
};
use shroomgen_core::mask::Mask;
use shroomgen_core::procgen::variant_bank;
use shroomgen_core::render::{rasterize_with_bank, CameraModel, Lens, RenderOptions};
use shroomgen_core::scene::{build_scene, SceneConfig, SceneDescriptor};

fn small_scenes(n: u64) -> (Vec<SceneDescriptor>, Vec<shroomgen_core::render::InstanceIdMap>) {
    let lens = Lens { width: 320, height: 240, ..Lens::default() };
    let cfg = SceneConfig {
        camera_height: 0.4,
        lens,
        region: CameraModel::look_down([0.0, 0.0], 0.4, lens).ground_footprint(),
        ..SceneConfig::default()
    };
    let bank = variant_bank::<f64>(&cfg.bank).unwrap();
    let scenes: Vec<SceneDescriptor> = (0..n).map(|s| build_scene(s, &cfg).unwrap()).collect();
    let ids = scenes
        .iter()
        .map(|s| rasterize_with_bank(s, &bank, RenderOptions::default()).unwrap().ids)
        .collect();
    (scenes, ids)
}

#[test]
fn export_round_trips_and_is_consistent() {
    let (scenes, ids) = small_scenes(3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("coco.json");
    let set = export_coco(&ids.iter().collect::<Vec<_>>(), &scenes.iter().collect::<Vec<_>>(), &path).unwrap();
    set.validate().unwrap();
    assert_eq!(AnnotationSet::load(&path).unwrap(), set);
    for (i, idmap) in ids.iter().enumerate() {
        let anns: Vec<_> = set.annotations_for(i as u64 + 1).collect();
        assert_eq!(anns.len(), idmap.visible_ids().len());
        // Masks partition the foreground.
        let total: f64 = anns.iter().map(|a| a.area).sum();
        assert_eq!(total as usize, idmap.data().iter().filter(|&&v| v != 0).count());
        let order: Vec<u32> = anns.iter().map(|a| a.extra.as_ref().unwrap().instance_id).collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]));
    }
    let stats = dataset_stats(&set);
    assert_eq!(stats.image_count, 3);
    assert_eq!(stats.instance_count, set.annotations.len());
}

#[test]
fn mismatched_inputs_rejected() {
    let (scenes, ids) = small_scenes(2);
    assert!(build_annotation_set(&[&ids[0]], &[&scenes[0], &scenes[1]]).is_err());
}

#[test]
fn empty_render_has_image_but_no_annotations() {
    let (mut scenes, _) = small_scenes(1);
    scenes[0].placements.clear();
    let bank = variant_bank::<f64>(&scenes[0].bank).unwrap();
    let ids = rasterize_with_bank(&scenes[0], &bank, RenderOptions::default()).unwrap().ids;
    let set = build_annotation_set(&[&ids], &[&scenes[0]]).unwrap();
    assert_eq!(set.images.len(), 1);
    assert!(set.annotations.is_empty());
}

#[test]
fn tiles_and_crops_stay_consistent() {
    let (scenes, ids) = small_scenes(2);
    let set = build_annotation_set(&ids.iter().collect::<Vec<_>>(), &scenes.iter().collect::<Vec<_>>()).unwrap();
    let spec = TileSpec { tile_width: 128, tile_height: 128, ..TileSpec::default() };
    let tiles = tile_sahi(&set, &spec).unwrap();
    tiles.validate().unwrap();
    assert_eq!(tiles.images.len(), 2 * tile_windows(320, 240, &spec).unwrap().len());
    let crops = crop_fixed(&set, 200, 200, 3, VisibilityFilter::default()).unwrap();
    crops.validate().unwrap();
    assert_eq!(crops.images.len(), 6);
    let prov = crops.images[1].provenance.as_ref().unwrap();
    assert_eq!(prov.origin, Some([60, 20]));
    assert_eq!(prov.scene_seed, Some(scenes[0].seed));
    assert_eq!(crops.images[1].file_name, format!("scene_{}_x60_y20.png", scenes[0].seed));
}

#[test]
fn thirteen_full_hd_images_give_195_tiles() {
    let mut set = AnnotationSet::new();
    for id in 1..=13 {
        set.images.push(shroomgen_core::annotate::ImageEntry {
            id,
            file_name: format!("real_{id}.png"),
            width: 1920,
            height: 1080,
            provenance: None,
        });
    }
    let spec = TileSpec { tile_width: 512, tile_height: 512, overlap: 0.2, ..TileSpec::default() };
    assert_eq!(tile_sahi(&set, &spec).unwrap().images.len(), 195);
}

#[test]
fn inside_annotation_survives_crop_unchanged() {
    let mut set = AnnotationSet::new();
    set.images.push(shroomgen_core::annotate::ImageEntry {
        id: 1,
        file_name: "a.png".into(),
        width: 1920,
        height: 1080,
        provenance: None,
    });
    let inside = Mask::from_fn(1920, 1080, |x, y| (500..540).contains(&x) && (300..330).contains(&y));
    let outside = Mask::from_fn(1920, 1080, |x, y| x < 20 && y < 20);
    for (i, m) in [inside.clone(), outside].iter().enumerate() {
        set.annotations.push(shroomgen_core::annotate::Annotation::from_rle(i as u64 + 1, 1, &Rle::from_mask(m), None));
    }
    let crops = crop_fixed(&set, 1024, 1024, 3, VisibilityFilter::default()).unwrap();
    // Centre crop at x = 448: only the inside annotation.
    let centre: Vec<_> = crops.annotations_for(2).collect();
    assert_eq!(centre.len(), 1);
    let m = centre[0].segmentation.to_rle().unwrap().to_mask();
    for y in 0..1024 {
        for x in 0..1024 {
            assert_eq!(m.get(x, y), inside.get(x + 448, y + 28));
        }
    }
    // The top-left square lies only in the left crop, where it is cut by y = 28.
    assert_eq!(crops.annotations_for(1).count(), 1);
}

#[test]
fn extra_compressed_fixtures() {
    // Traced with the reference string encoder, including negative deltas
    // and multi-character values.
    for (counts, s) in [
        (vec![2, 10, 1, 3], "2:1I"),
        (vec![7, 300, 2, 1, 40000], "7\\92eFnQW1"),
        (vec![1_000_000], "Pb`n0"),
    ] {
        assert_eq!(encode_counts(&counts), s);
        assert_eq!(decode_counts(s).unwrap(), counts);
    }
}

fn mask_strategy() -> impl Strategy<Value = Mask> {
    (1u32..40, 1u32..40).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<bool>(), (w * h) as usize).prop_map(move |d| Mask::from_vec(w, h, d))
    })
}

proptest! {
    #[test]
    fn tiles_cover_every_pixel(w in 1u32..300, h in 1u32..300, tw in 1u32..120, th in 1u32..120, overlap in 0.0f64..0.9) {
        prop_assume!(tw <= w && th <= h);
        let spec = TileSpec { tile_width: tw, tile_height: th, overlap, ..TileSpec::default() };
        let tiles = tile_windows(w, h, &spec).unwrap();
        let mut covered = vec![false; (w * h) as usize];
        for t in &tiles {
            prop_assert!(t.x + t.width <= w && t.y + t.height <= h);
            for y in t.y..t.y + t.height {
                for x in t.x..t.x + t.width {
                    covered[(y * w + x) as usize] = true;
                }
            }
        }
        prop_assert!(covered.iter().all(|&c| c));
        let mut uniq = tiles.clone();
        uniq.sort_by_key(|t| (t.y, t.x));
        uniq.dedup();
        prop_assert_eq!(uniq.len(), tiles.len());
    }

    #[test]
    fn clipping_conserves_area(mask in mask_strategy(), tw in 1u32..10, th in 1u32..10) {
        let (w, h) = (mask.width(), mask.height());
        let rle = Rle::from_mask(&mask);
        let mut total = 0;
        for y in (0..h).step_by(th as usize) {
            for x in (0..w).step_by(tw as usize) {
                let win = Window { x, y, width: tw.min(w - x), height: th.min(h - y) };
                total += clip_rle(&rle, win).area();
            }
        }
        prop_assert_eq!(total, mask.area());
    }

    #[test]
    fn bbox_matches_decoded_mask(mask in mask_strategy()) {
        let rle = Rle::from_mask(&mask);
        let ann = shroomgen_core::annotate::Annotation::from_rle(1, 1, &rle, None);
        let decoded = ann.segmentation.to_rle().unwrap().to_mask();
        prop_assert_eq!(&decoded, &mask);
        let expect = mask.bbox().map(|b| b.to_xywh()).unwrap_or([0.0; 4]);
        prop_assert_eq!(ann.bbox, expect);
        prop_assert_eq!(ann.area as u64, mask.area());
    }
}

#[test]
fn windows_with_keep_all_preserve_every_pixel() {
    let (scenes, ids) = small_scenes(1);
    let set = build_annotation_set(&[&ids[0]], &[&scenes[0]]).unwrap();
    let quarter = |_: &_| {
        Ok(vec![
            Window { x: 0, y: 0, width: 160, height: 120 },
            Window { x: 160, y: 0, width: 160, height: 120 },
            Window { x: 0, y: 120, width: 160, height: 120 },
            Window { x: 160, y: 120, width: 160, height: 120 },
        ])
    };
    let out = apply_windows(&set, quarter, VisibilityFilter::KEEP_ALL).unwrap();
    let before: f64 = set.annotations.iter().map(|a| a.area).sum();
    let after: f64 = out.annotations.iter().map(|a| a.area).sum();
    assert_eq!(before, after);
}
