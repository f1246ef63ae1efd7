//! Window ladder and sparsity of the dual-window attention masks.

use msbatn::attention::{
    attended_pairs_count, build_sparse_mask, build_window_schedule, Neighborhood, ScaleSet,
};

fn main() -> msbatn::Result<()> {
    let t = 2048;
    let schedule = build_window_schedule(10, 16, 256)?;
    println!("layer  expanding(w,r)  shrinking(w,r)  density");
    let mut total = 0usize;
    for (l, (e, s)) in schedule.iter().enumerate() {
        let pe = attended_pairs_count(&build_sparse_mask(t, e));
        let ps = attended_pairs_count(&build_sparse_mask(t, s));
        total += pe + ps;
        println!(
            "{l:>5}  ({:>3},{})         ({:>3},{})         {:.4}",
            e.one_sided_width,
            e.dilation_rate,
            s.one_sided_width,
            s.dilation_rate,
            (pe + ps) as f64 / 2.0 / (t * t) as f64
        );
    }
    println!(
        "mean density over layers: {:.4}",
        total as f64 / 20.0 / (t * t) as f64
    );

    let scales = ScaleSet::for_length(t, 64, 8)?;
    let nb = Neighborhood::hierarchical(t, scales.count(), 16, false)?;
    println!(
        "hierarchical: {} scales, {} pairs, density {:.4}",
        scales.count(),
        attended_pairs_count(nb.union()),
        attended_pairs_count(nb.union()) as f64 / (t * t) as f64
    );
    Ok(())
}
