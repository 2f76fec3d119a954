// SPDX-License-Identifier: Apache-2.0

use nsflow_core::cost::{evaluate, layer_cycles, memory_plan, vsa_spatial, vsa_temporal, MappingScheme};
use nsflow_core::dse::{phase1, phase2, random_instance, run_dse};
use nsflow_core::graph::DataflowGraph;
use nsflow_core::oracles::{blockwise, circ_conv, circ_corr, dequantize, gemm, quantize, Matrix, QuantParams};
use nsflow_core::sim::{configure, ColumnRef, ConvSchedule, FoldingConfig};
use nsflow_core::workload::{parse_workload, serialize_workload, LayerDims, Precision, VsaDims, VsaOp};
use nsflow_core::HwConfig;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn vec_pair(max_d: usize) -> impl Strategy<Value = (Vec<i64>, Vec<i64>)> {
    (1..=max_d).prop_flat_map(|d| (prop::collection::vec(-100i64..100, d), prop::collection::vec(-100i64..100, d)))
}

fn pow2(lo: u32, hi: u32) -> impl Strategy<Value = u64> {
    (lo..=hi).prop_map(|e| 1u64 << e)
}

proptest! {
    #[test]
    fn bind_then_unbind_with_delta_key((a, _) in vec_pair(24)) {
        let d = a.len();
        let mut key = vec![0i64; d];
        key[d / 2] = 1;
        let bound = circ_conv(&a, &key).unwrap();
        prop_assert_eq!(circ_corr(&bound, &key).unwrap(), a);
    }

    #[test]
    fn conv_rotation_equivariance((a, b) in vec_pair(24), shift in 0usize..24) {
        let d = a.len();
        let s = shift % d;
        let mut rot = a.clone();
        rot.rotate_right(s);
        let mut expect = circ_conv(&a, &b).unwrap();
        expect.rotate_right(s);
        prop_assert_eq!(circ_conv(&rot, &b).unwrap(), expect);
    }

    #[test]
    fn corr_is_conv_with_involuted_key((a, b) in vec_pair(24)) {
        let d = b.len();
        let inv: Vec<i64> = (0..d).map(|i| b[(d - i) % d]).collect();
        prop_assert_eq!(circ_corr(&a, &b).unwrap(), circ_conv(&a, &inv).unwrap());
    }

    #[test]
    fn blockwise_is_concatenation(blocks in 1usize..5, block in 1usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = blocks * block;
        let a: Vec<i64> = (0..len).map(|_| rand::Rng::gen_range(&mut rng, -9..9)).collect();
        let b: Vec<i64> = (0..len).map(|_| rand::Rng::gen_range(&mut rng, -9..9)).collect();
        let whole = blockwise(circ_conv, &a, &b, block).unwrap();
        for k in 0..blocks {
            let r = k * block..(k + 1) * block;
            prop_assert_eq!(&whole[r.clone()], &circ_conv(&a[r.clone()], &b[r]).unwrap()[..]);
        }
    }

    #[test]
    fn quantize_round_trip_within_half_step(xs in prop::collection::vec(-1.0f64..1.0, 1..32), scale in 0.01f64..0.5) {
        let q = QuantParams::new(scale, Precision::INT8).unwrap();
        let back = dequantize(&quantize(&xs, q), q);
        for (x, y) in xs.iter().zip(&back) {
            let clipped = x.clamp(-128.0 * scale, 127.0 * scale);
            prop_assert!((clipped - y).abs() <= scale / 2.0 + 1e-12);
        }
    }

    #[test]
    fn layer_cycles_shrink_with_more_sub_arrays(
        h in pow2(1, 5), w in pow2(1, 5), g in 1u64..8,
        m in 1u64..200, n in 1u64..200, k in 1u64..200,
    ) {
        let dims = LayerDims::new(m, n, k, Precision::INT8);
        prop_assert!(layer_cycles(h, w, g + 1, &dims).unwrap() <= layer_cycles(h, w, g, &dims).unwrap());
    }

    #[test]
    fn vsa_mappings_agree_on_one_column_array(h in pow2(1, 5), nv in 1u64..6, n_vec in 1u64..20, d_exp in 1u32..8) {
        let d = 1 << d_exp;
        let dims = VsaDims::new(n_vec, d, d, VsaOp::Bind, Precision::INT4);
        prop_assert_eq!(vsa_spatial(h, 1, nv, &dims).unwrap(), vsa_temporal(h, 1, nv, &dims).unwrap());
    }

    #[test]
    fn parallel_total_bounds(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (spec, params) = random_instance(&mut rng);
        let graph = DataflowGraph::build(&spec).unwrap();
        let (p1, _, _) = phase1(&graph, &params).unwrap();
        let r = &p1.cost;
        prop_assert_eq!(r.t_para, r.t_nn.max(r.t_vsa));
        if !r.sequential {
            // Overlap never beats running the longer kernel every loop.
            prop_assert!(r.total >= r.loop_count * r.t_para);
            prop_assert!(r.total <= r.loop_count * (r.t_nn + r.t_vsa));
        }
        let (p2, _) = phase2(&graph, &params, &p1).unwrap();
        prop_assert!(p2.cost.total <= p1.cost.total);
        let plan = memory_plan(&graph, p2.cfg, &p2.mapping);
        prop_assert!(plan.cache_identity_holds());
    }

    #[test]
    fn workload_serialization_round_trips(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (spec, _) = random_instance(&mut rng);
        let text = serialize_workload(&spec);
        let back = parse_workload(&text).unwrap();
        prop_assert_eq!(serialize_workload(&back), text);
    }

    #[test]
    fn simulated_gemm_matches_oracle(
        h in pow2(1, 3), w in pow2(1, 3), n_sub in 1usize..4,
        m in 1usize..10, n in 1usize..20, k in 1usize..10, seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |r, c| Matrix::from_fn(r, c, |_, _| rand::Rng::gen_range(&mut rng, -128..=127));
        let a = draw(m, n);
        let b = draw(n, k);
        let mut sim = configure(h as usize, w as usize, n_sub, FoldingConfig::all_nn(n_sub)).unwrap();
        let res = sim.run_gemm(0, &a, &b).unwrap();
        let expect = gemm(&a.map(i64::from), &b.map(i64::from)).unwrap();
        for i in 0..m {
            prop_assert_eq!(&res.outputs[i][..], expect.row(i));
        }
    }

    #[test]
    fn tiled_conv_matches_oracle(h in pow2(1, 3), w in pow2(1, 2), d_exp in 1u32..6, vecs in 1usize..5, seed in any::<u64>()) {
        let (h, w, d) = (h as usize, w as usize, 1usize << d_exp);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || (0..d).map(|_| rand::Rng::gen_range(&mut rng, -8..=7)).collect::<Vec<i32>>();
        let a: Vec<Vec<i32>> = (0..vecs).map(|_| draw()).collect();
        let b: Vec<Vec<i32>> = (0..vecs).map(|_| draw()).collect();
        let cols: Vec<ColumnRef> = (0..w).map(|c| ColumnRef { sub_array: 0, col: c }).collect();
        let mut sim = configure(h, w, 1, FoldingConfig::all_vsa(1)).unwrap();
        let res = sim.run_circconv_tiled(&cols, &a, &b, d, ConvSchedule::Packed).unwrap();
        for v in 0..vecs {
            let expect: Vec<i64> = circ_conv(&a[v], &b[v]).unwrap().into_iter().map(i64::from).collect();
            prop_assert_eq!(&res.outputs[v], &expect);
        }
    }
}

#[test]
fn dse_point_re_evaluates_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let (spec, params) = random_instance(&mut rng);
        let graph = DataflowGraph::build(&spec).unwrap();
        let out = run_dse(&graph, &params).unwrap();
        let again = evaluate(&graph, out.point.cfg, &out.point.mapping).unwrap();
        assert_eq!(again, out.point.cost);
    }
}

#[test]
fn uniform_split_matches_sequential_when_one_kernel_is_idle() {
    let spec = parse_workload(
        r#"{"name":"nn-only","loop_count":3,"nodes":[
            {"id":"L1","kind":"layer","m":4,"n":8,"k":8,"precision":"INT8","deps":[]}]}"#,
    )
    .unwrap();
    let graph = DataflowGraph::build(&spec).unwrap();
    let cfg = HwConfig::new(2, 2, 4);
    let seq = evaluate(&graph, cfg, &MappingScheme::sequential(1, 0, 4)).unwrap();
    assert_eq!(seq.total, 3 * 32);
}
