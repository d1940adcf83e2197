use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use reduction_machine::assembler::{assemble_text, disassemble, parse};
use reduction_machine::machine::{
    AluOp, Instruction, Lane, Machine, MachineConfig, Mode, NoiseWindow, Reg, RegisterFile,
};
use reduction_machine::physics::{self, Damping, PhysicsParams};
use reduction_machine::quantum::{
    apply_superselection, evolve_von_neumann, purify, shannon_entropy, DensityMatrix, PointerState,
};

fn reg() -> impl Strategy<Value = Reg> {
    (0u8..8).prop_map(|i| Reg::new(i).unwrap())
}

proptest! {
    #[test]
    fn superselection_ignores_branch_phase(p1 in 0.0f64..=1.0, theta in -10.0f64..10.0) {
        let psi = purify(&DensityMatrix::diagonal(1.0 - p1, p1).unwrap()).unwrap();
        let a = apply_superselection(&psi);
        let b = apply_superselection(&psi.with_relative_phase(theta));
        for i in 0..2 {
            for j in 0..2 {
                prop_assert!((a.get(i, j) - b.get(i, j)).norm() <= 1e-12);
            }
        }
        prop_assert!((a.populations()[1] - p1).abs() <= 1e-12);
    }

    #[test]
    fn coupling_keeps_populations(p1 in 0.0f64..=1.0, lambda in 0.0f64..5.0, t in 0.0f64..5.0, mom in -3.0f64..3.0) {
        let psi = purify(&DensityMatrix::diagonal(1.0 - p1, p1).unwrap()).unwrap();
        let q = PointerState::new(0.0, mom, 1.0).unwrap();
        let (out, q2) = evolve_von_neumann(&psi, &q, lambda, t);
        prop_assert!((out.meter_populations()[1] - p1).abs() <= 1e-12);
        prop_assert!((out.norm_sqr() - 1.0).abs() <= 1e-12);
        prop_assert!((q2.separation() - lambda * t).abs() <= 1e-12 * (1.0 + lambda * t));
    }

    #[test]
    fn latency_covers_settling_and_separation(k1 in 0.05f64..20.0, u0 in 0.05f64..20.0, t_cycle in 0.01f64..10.0) {
        let p = PhysicsParams { u0, k_d: k1, damping: Damping::Linear, ..PhysicsParams::default() };
        let k = physics::kinematics(&p).unwrap();
        let cycles = physics::readout_latency(&p, 1.0, 3.0, t_cycle).unwrap();
        let needed = 5.0 * k.tau_d + 3.0 / k.v_terminal;
        prop_assert!(cycles as f64 * t_cycle >= needed * (1.0 - 1e-12));
        prop_assert!(cycles == 1 || (cycles - 1) as f64 * t_cycle < needed);
    }

    #[test]
    fn relaxation_is_monotone_below_terminal(k1 in 0.1f64..10.0, frac in 0.0f64..0.99) {
        let p = PhysicsParams { k_d: k1, ..PhysicsParams::default() };
        let lambda = physics::terminal_velocity(&p).unwrap();
        let tau = physics::relaxation_time(&p).unwrap();
        let v = physics::velocity_trajectory(&p, frac * lambda, tau / 100.0, 500).unwrap();
        prop_assert!(v.windows(2).all(|w| w[1] > w[0] && w[1] <= lambda));
    }

    #[test]
    fn noise_preserves_weight(level in 0u8..=255, r in reg(), full in any::<bool>(), cap in 0u32..6) {
        let mut rf = RegisterFile::new(Mode::Coarse, cap);
        let window = if full { NoiseWindow::Register } else { NoiseWindow::LowBit };
        rf.apply_noise(r, window, level as f64 / 256.0);
        prop_assert!((rf.total_weight() - 1.0).abs() <= 1e-9);
        prop_assert!(rf.branch_count() <= 1usize << cap);
        let weights: Vec<f64> = rf.branches().map(|(_, w)| w).collect();
        prop_assert!(shannon_entropy(&weights).unwrap() >= 0.0);
    }

    #[test]
    fn alu_is_applied_branchwise(level in 1u8..=255, imm in any::<u8>(), r in reg()) {
        let mut rf = RegisterFile::new(Mode::Coarse, 16);
        rf.apply_noise(r, NoiseWindow::Register, level as f64 / 256.0);
        let before: Vec<(u8, f64)> = rf.register_distribution(r).into_iter().collect();
        rf.apply_alu(AluOp::Xor, r, |_| imm);
        let after = rf.register_distribution(r);
        for (v, w) in before {
            prop_assert!((after[&(v ^ imm)] - w).abs() <= 1e-12);
        }
    }

    #[test]
    fn fine_runs_ignore_the_seed(level in any::<u8>(), s1 in any::<u64>(), s2 in any::<u64>()) {
        let src = format!("LOAD R1, #5\nNOISE R1, {level}\nWRPIN R1.0, 0xC0\nSTORE R1, 0xC1\nHALT");
        let image = assemble_text(&src).unwrap();
        let run = |seed| {
            let mut m = Machine::new(MachineConfig::default().with_mode(Mode::Fine), &image).unwrap();
            m.run(1000, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            (m.memory().to_vec(), m.information_bits(), m.cycle())
        };
        let (mem, info, _) = run(s1);
        prop_assert_eq!(run(s1), run(s2));
        prop_assert_eq!(info, 0.0);
        prop_assert_eq!(mem[0xC1], 5);
    }

    #[test]
    fn images_round_trip_through_text(image in prop::collection::vec(any::<u16>(), 0..64)) {
        let text = disassemble(&image);
        prop_assert_eq!(assemble_text(&text).unwrap(), image);
    }

    #[test]
    fn instructions_round_trip(w in any::<u16>()) {
        if let Ok(i) = Instruction::decode(w) {
            prop_assert_eq!(i.encode(), w);
            let p = parse(&i.to_string()).unwrap();
            prop_assert_eq!(p.lines.len(), 1);
        }
    }

    #[test]
    fn pin_write_conditions_branches(level in 1u8..=255, seed in any::<u64>(), lane in 0u8..8) {
        let src = format!("NOISE R2, {level}\nWRPIN R2.{lane}, 0xC4\nHALT");
        let image = assemble_text(&src).unwrap();
        let mut m = Machine::new(MachineConfig::default().with_mode(Mode::Coarse), &image).unwrap();
        m.run(1000, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let bit = (m.memory()[0xC4] >> lane) & 1 == 1;
        let l = Lane::new(lane).unwrap();
        let r = Reg::new(2).unwrap();
        prop_assert!(m.registers().branches().all(|(s, _)| reduction_machine::machine::registers::bit_of(s, r, l) == bit));
        prop_assert!((m.registers().total_weight() - 1.0).abs() <= 1e-9);
    }
}
