//! Parameter count and multiply-accumulates of the default model.

use msbatn::network::{count_params_flops, param_specs, ModelConfig};

fn main() -> msbatn::Result<()> {
    let cfg = ModelConfig::default();
    let mut groups: Vec<(String, usize)> = Vec::new();
    for spec in param_specs(&cfg) {
        let group = spec.name.split('.').take(2).collect::<Vec<_>>().join(".");
        let n: usize = spec.shape.iter().product();
        match groups.last_mut() {
            Some((g, total)) if *g == group => *total += n,
            _ => groups.push((group, n)),
        }
    }
    for (g, n) in &groups {
        println!("{g:<12} {n:>10}");
    }
    for t in [512, 1024, 2048, 4096] {
        let r = count_params_flops(&cfg, t)?;
        println!(
            "T={t:<5} params {:.4} M  GMACs {:.3}  attention share {:.1}%",
            r.params as f64 / 1e6,
            r.gmacs(),
            100.0 * r.attention_macs as f64 / r.macs as f64
        );
    }
    Ok(())
}
