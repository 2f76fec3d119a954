// SPDX-License-Identifier: Apache-2.0

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nsflow_bench::{int4_vector, int8_matrix, resnet_graph};
use nsflow_core::cost::{evaluate, HwConfig, MappingScheme};
use nsflow_core::dse::{phase1, run_dse, DseParams};
use nsflow_core::oracles::circ_conv;
use nsflow_core::sim::{configure, ColumnRef, FoldingConfig};

fn cost_model(c: &mut Criterion) {
    let graph = resnet_graph(0.2);
    let cfg = HwConfig::new(16, 16, 4);
    let mapping = MappingScheme::uniform(graph.r_l.len(), graph.r_v.len(), 3, 1);
    c.bench_function("evaluate resnet 0.2", |b| b.iter(|| evaluate(black_box(&graph), cfg, &mapping).unwrap()));
}

fn search(c: &mut Criterion) {
    let graph = resnet_graph(0.2);
    let params = DseParams::new(1024);
    let mut group = c.benchmark_group("dse");
    group.sample_size(10);
    group.bench_function("phase1 M=1024", |b| b.iter(|| phase1(black_box(&graph), &params).unwrap()));
    group.bench_function("run_dse M=1024", |b| b.iter(|| run_dse(black_box(&graph), &params).unwrap()));
    group.finish();
}

fn simulator(c: &mut Criterion) {
    let a = int8_matrix(16, 64, 1);
    let bm = int8_matrix(64, 16, 2);
    c.bench_function("run_gemm 16x64x16 on 8x8x2", |b| {
        b.iter(|| {
            let mut sim = configure(8, 8, 2, FoldingConfig::all_nn(2)).unwrap();
            sim.run_gemm(0, black_box(&a), &bm).unwrap()
        })
    });
    let va: Vec<Vec<i32>> = (0..8).map(|s| int4_vector(16, s)).collect();
    let vb: Vec<Vec<i32>> = (0..8).map(|s| int4_vector(16, s + 8)).collect();
    let cols: Vec<ColumnRef> = (0..8).map(|c| ColumnRef { sub_array: 0, col: c }).collect();
    c.bench_function("run_circconv d=16 on 16x8", |b| {
        b.iter(|| {
            let mut sim = configure(16, 8, 1, FoldingConfig::all_vsa(1)).unwrap();
            sim.run_circconv(&cols, black_box(&va), &vb, 16).unwrap()
        })
    });
}

fn oracles(c: &mut Criterion) {
    let a: Vec<i64> = int4_vector(1024, 1).into_iter().map(i64::from).collect();
    let b: Vec<i64> = int4_vector(1024, 2).into_iter().map(i64::from).collect();
    c.bench_function("circ_conv d=1024", |bch| bch.iter(|| circ_conv(black_box(&a), &b).unwrap()));
}

criterion_group!(benches, cost_model, search, simulator, oracles);
criterion_main!(benches);
