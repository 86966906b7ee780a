use ambimask::scenegen::*;
fn main() {
    let cat = CategoryCatalog::default_catalog();
    let cfg = GenConfig { p_amb: 1.0, k_max: 3, ..GenConfig::default() };
    let t0 = std::time::Instant::now();
    match generate_dataset(&cat, &vec![1.0; 32], 2000, &cfg, 12345, 0, 0) {
        Ok(s) => {
            let mean_area: f64 = s.iter().map(|x| x.gt.area() as f64).sum::<f64>() / s.len() as f64;
            println!("ok: {} samples in {:?}, mean gt area {:.1}px", s.len(), t0.elapsed(), mean_area);
            for smp in &s { smp.check_invariants().unwrap(); }
            println!("invariants ok");
        }
        Err(e) => println!("FAILED: {e}"),
    }
}
