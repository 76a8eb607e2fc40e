use cepsim_core::alphabet::PskAlphabet;
use cepsim_core::channel::{draw_channel, snr_to_sigma_w2, stacked_noise_energy, stack_real, stream_rng, unstack};
use cepsim_core::polytope::build_polyhedron;
use cepsim_core::precoders::{discrete_mse, mmse_branch_and_bound, BbConfig};
use cepsim_core::qpsolve::{assemble_full_qp, solve_default};
use cepsim_core::linalg::CVec;
use rand::Rng;

fn main() {
    let k = 3; let m = 12; let alpha = 8;
    let snr = -10.0;
    let sigma = snr_to_sigma_w2(snr, 1.0);
    let s_alpha = PskAlphabet::data(alpha).unwrap();
    let x_alpha = PskAlphabet::transmit(alpha, m, 1.0).unwrap();
    let poly = build_polyhedron(m, alpha).unwrap();
    let cfg = BbConfig::default();
    let mut dists = Vec::new();
    let mut rels = Vec::new();
    let mut bs = Vec::new();
    for trial in 0..40u64 {
        let mut rng = stream_rng(11, trial);
        let ch = draw_channel(k, m, sigma, &mut rng).unwrap();
        let s = CVec::from_iterator(k, (0..k).map(|_| s_alpha.point(rng.gen_range(0..alpha))));
        let h_r = ch.stacked();
        let s_r = stack_real(&s);
        let e_w = stacked_noise_energy(k, sigma);
        let qp = assemble_full_qp(&h_r, &s_r, e_w, &poly);
        let sol = solve_default(&qp).unwrap();
        let x_lb = unstack(&(&sol.x_f / sol.f));
        let mut dist: f64 = 0.0;
        let mapped: Vec<u8> = x_lb.iter().map(|z| {
            let i = x_alpha.nearest(*z);
            dist = dist.max((z - x_alpha.point(i)).norm());
            i as u8
        }).collect();
        let x_m = CVec::from_iterator(m as usize, mapped.iter().map(|&i| x_alpha.point(i as usize)));
        let (_, mse) = discrete_mse(&h_r, &stack_real(&x_m), e_w, &s_r);
        let rel = (mse - sol.objective) / mse.max(1e-12);
        dists.push(dist);
        rels.push(rel);
        let bb = mmse_branch_and_bound(&ch, &s, &poly, &x_alpha, &cfg).unwrap();
        bs.push(bb.bounds_evaluated);
    }
    dists.sort_by(f64::total_cmp);
    rels.sort_by(f64::total_cmp);
    bs.sort();
    println!("max-entry distance to nearest X: min {:.2e} median {:.2e} p75 {:.2e} max {:.2e}", dists[0], dists[20], dists[30], dists[39]);
    println!("relative (ub-lb)/ub: min {:.2e} median {:.2e} p75 {:.2e} max {:.2e}", rels[0], rels[20], rels[30], rels[39]);
    println!("B: {:?}", bs);
}
