//! Reproducible demo data: the bundled stock example extended with
//! randomly generated articles, warehouses, motions and sales.

use std::fmt::Write;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

/// The bundled stock accounting example.
pub const WAREHOUSE: &str = include_str!("../scripts/warehouse.ro");

fn date(rng: &mut StdRng) -> String {
    format!("#{:02}.{:02}.2005#", rng.gen_range(1..=28), rng.gen_range(1..=12))
}

fn items(rng: &mut StdRng, arts: &[String], max: usize) -> Vec<String> {
    let n = rng.gen_range(1..=max.min(arts.len()));
    arts.choose_multiple(rng, n).cloned().collect()
}

/// Script text building the example plus data drawn from `seed`.
pub fn seeded_script(seed: u64) -> String {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut s = String::from(WAREHOUSE);
    s.push_str("\n// generated data\n");
    let mut arts: Vec<String> = vec!["a1".into(), "a2".into()];
    for i in 0..rng.gen_range(2..=5) {
        let no = format!("d{i}");
        let brand = ["Acme", "Zenith"][rng.gen_range(0..2)];
        let _ = writeln!(s, "NEW Article(\"{no}\");");
        let _ = writeln!(s, "Object(Article WHERE No = \"{no}\").BrandName := \"{brand}\";");
        arts.push(no);
    }
    let mut wares: Vec<String> = vec!["W1".into(), "W2".into()];
    for i in 0..rng.gen_range(1..=3) {
        let w = format!("D{i}");
        let _ = writeln!(s, "NEW Warehouse(\"{w}\");");
        wares.push(w);
    }
    let ware = |w: &str| format!("Object(Warehouse WHERE Address = \"{w}\")");
    let art = |a: &str| format!("Object(Article WHERE No = \"{a}\")");
    for i in 0..rng.gen_range(3..=8) {
        let no = 100 + i;
        let target = format!("Object(GoodsMotion WHERE No = {no})");
        let _ = writeln!(s, "NEW GoodsMotion({no});");
        let _ = writeln!(s, "{target}.ToWarehouse := {};", ware(wares.choose(&mut rng).expect("non-empty")));
        if rng.gen_bool(0.3) {
            let _ = writeln!(s, "{target}.FromWarehouse := {};", ware(wares.choose(&mut rng).expect("non-empty")));
        }
        let _ = writeln!(s, "{target}.DateOfAction := {};", date(&mut rng));
        for a in items(&mut rng, &arts, 3) {
            let _ = writeln!(
                s,
                "INSERT INTO {target}.MovedItems VALUE {{Art: {}, Quantity: {}}};",
                art(&a),
                rng.gen_range(1..=20)
            );
        }
    }
    for i in 0..rng.gen_range(1..=4) {
        let no = 200 + i;
        let target = format!("Object(Sales WHERE No = {no})");
        let _ = writeln!(s, "NEW Sales({no});");
        let _ = writeln!(s, "{target}.FromWarehouse := {};", ware(wares.choose(&mut rng).expect("non-empty")));
        let _ = writeln!(s, "{target}.IsPayed := {};", if rng.gen_bool(0.7) { "TRUE" } else { "FALSE" });
        if rng.gen_bool(0.5) {
            let _ = writeln!(s, "{target}.DateOfAction := {};", date(&mut rng));
        }
        for a in items(&mut rng, &arts, 2) {
            let price = f64::from(rng.gen_range(10..=200)) / 2.0;
            let _ = writeln!(
                s,
                "INSERT INTO {target}.SaleItems VALUE {{Art: {}, Quantity: {}, Price: {price:?}}};",
                art(&a),
                rng.gen_range(1..=3)
            );
        }
    }
    s
}
