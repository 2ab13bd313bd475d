use morse_lab::config::Tolerances;
use morse_lab::critical::{enumerate_critical_points, CriticalSearchOptions};
use morse_lab::flow::{flow_to_limit_tracked, FlowDirection, LimitOptions, StepControl};
use morse_lab::moduli::{sample_unstable_sphere, shoot_point, CriticalTable, SamplingOptions};
use morse_lab::scenario::build;

fn main() {
    let tols = Tolerances::default();
    let s = build("flag-su3", &tols).unwrap();
    let crit = enumerate_critical_points(
        &s.manifold, &s.function, &s.group, 2000, 0xc417, &CriticalSearchOptions::default(),
    ).unwrap();
    let table = CriticalTable::build(&s.manifold, &s.function, crit, 1e-8, 1e-6).unwrap();
    for c in &table.points {
        println!("id={} value={:.3} index={}", c.id, c.value, c.index);
    }
    let ctrl = StepControl::default();
    let lo = LimitOptions::default();
    let so = SamplingOptions { sphere_directions: 512, seed: 0, ..Default::default() };
    let p_id = 3usize;
    let q_id = 1usize;
    let sample = sample_unstable_sphere(&s.manifold, &s.function, &table, p_id, &so, &ctrl, &lo, Some(q_id));
    let dists = sample.min_dist_to_target.as_ref().unwrap();
    let mut order: Vec<usize> = (0..dists.len()).collect();
    order.sort_by(|&a, &b| dists[a].partial_cmp(&dists[b]).unwrap());
    println!("spacing = {:.4}", sample.spacing);
    println!("best coarse min-dists: {:?}", order.iter().take(8).map(|&i| (dists[i]*1000.0).round()/1000.0).collect::<Vec<_>>());

    // descend manually from the best: bisect-like pattern search with logging
    let base = table.points[p_id].location.coords().clone();
    let crit_locations = table.locations();
    let objective = |v: &nalgebra::DVector<f64>| -> (Option<usize>, f64) {
        let x0 = shoot_point(&s.manifold, &base, v, 1e-4).unwrap();
        match flow_to_limit_tracked(&s.manifold, &s.function, &x0, FlowDirection::Forward, &crit_locations, &ctrl, &lo, Some(q_id)) {
            Ok((id, _, d)) => (Some(id), d),
            Err(e) => { println!("   err: {e}"); (None, f64::INFINITY) }
        }
    };
    let mut v = sample.directions[order[0]].clone();
    let (mut fate, mut best) = objective(&v);
    println!("start fate={:?} d={:.6}", fate, best);
    let eb = &sample.eigenbasis;
    let mut radius: f64 = 2.0 * sample.spacing;
    let mut evals = 0;
    while fate != Some(q_id) && radius > 1e-12 && evals < 2000 {
        let k = eb.ncols();
        let mut stacked = nalgebra::DMatrix::zeros(v.len(), k + 1);
        stacked.set_column(0, &v);
        for c in 0..k { stacked.set_column(c + 1, &eb.column(c)); }
        let qf = stacked.qr().q();
        let mut improved = false;
        for c in 1..k {
            for sign in [1.0f64, -1.0] {
                let cand_raw = &v + qf.column(c) * (sign * radius);
                let cand = &cand_raw / cand_raw.norm();
                let (cf, cd) = objective(&cand);
                evals += 1;
                if cf == Some(q_id) || cd < best {
                    v = cand; fate = cf; best = cd; improved = true;
                    break;
                }
            }
            if improved { break; }
        }
        if !improved { radius *= 0.5; }
        if evals % 50 == 0 { println!("evals={} radius={:.2e} best={:.3e} fate={:?}", evals, radius, best, fate); }
    }
    println!("final: evals={} fate={:?} best={:.3e} radius={:.2e}", evals, fate, best, radius);
}
