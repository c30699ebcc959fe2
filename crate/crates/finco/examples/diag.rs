use finco::cli_io::{load_config, propagate_manifold};
use finco::sampling::ManifoldGrid;
use finco::finco::{sample_weight, apply_filters, Rejection};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let depth: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.4);
    let mut cfg = load_config("morse-revival").unwrap();
    cfg.contour.dip_depth = depth;
    let grid = ManifoldGrid::uniform(cfg.manifold.rect(), cfg.manifold.nx, cfg.manifold.ny).unwrap();
    let t = cfg.classical_period().unwrap();
    let contour = cfg.contour_for(t).unwrap();
    let records = propagate_manifold(&cfg, &grid, &contour);
    let da = grid.points[0].weight;
    println!("# re_q0 im_q0 rej sigma_im_skin final_re_v jac_ovl qf pf re_w im_w");
    for r in &records {
        let s = sample_weight(r, &cfg.initial, cfg.gamma_f, da);
        let f = apply_filters(r, &s, &cfg.filters);
        let rej = match f.rejection {
            None => 0, Some(Rejection::Invalid) => 1, Some(Rejection::KineticAction) => 2,
            Some(Rejection::PotentialDivergence) => 3, Some(Rejection::NoiseMagnitude) => 4,
        };
        println!("{:.6e} {:.6e} {} {:.6e} {:.6e} {:.6e} {:.6e} {:.6e} {:.6e} {:.6e}",
            r.q_init.re, r.q_init.im, rej, r.final_state.s_kin.im, r.final_re_v,
            s.jac_overlap_mag, s.qf, s.pf, s.weight.re, s.weight.im);
    }
}
