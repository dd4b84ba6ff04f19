/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_alifrun_free: (a: number, b: number) => void;
export const alifrun_spike_count: (a: number) => number;
export const alifrun_spikes: (a: number) => [number, number];
export const alifrun_theta: (a: number) => [number, number];
export const alifrun_u: (a: number) => [number, number];
export const energy_report: (a: number, b: number, c: number) => [number, number, number, number];
export const example_architectures: () => [number, number];
export const simulate_alif: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
export const surrogate_curve: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
