/* tslint:disable */
/* eslint-disable */

export class AlifRun {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    spike_count(): number;
    spikes(): Uint8Array;
    theta(): Float64Array;
    u(): Float64Array;
}

export function energy_report(arch_json: string, fr: number): string;

export function example_architectures(): string;

export function simulate_alif(tau_m: number, tau_adp: number, b0: number, beta: number, current: number, on: number, off: number, steps: number): AlifRun;

export function surrogate_curve(kind: string, p1: number, p2: number, p3: number, x_min: number, x_max: number, points: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_alifrun_free: (a: number, b: number) => void;
    readonly alifrun_spike_count: (a: number) => number;
    readonly alifrun_spikes: (a: number) => [number, number];
    readonly alifrun_theta: (a: number) => [number, number];
    readonly alifrun_u: (a: number) => [number, number];
    readonly energy_report: (a: number, b: number, c: number) => [number, number, number, number];
    readonly example_architectures: () => [number, number];
    readonly simulate_alif: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
    readonly surrogate_curve: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
