/* tslint:disable */
/* eslint-disable */

/**
 * Exponential correlations followed by Matérn correlations at distances
 * `0, 1/(points-1), …, 1`.
 */
export function correlation_curves(rho: number, nu: number, points: number): Float64Array;

/**
 * Prior sample paths on an even grid over [0, 1], `draws × points`,
 * row-major.
 */
export function prior_draws(family: string, rho: number, nu: number, lambda_a: number, lambda_z: number, points: number, draws: number, seed: bigint): Float64Array;

/**
 * Marginal inclusion probabilities, then median ρ's, of a short
 * Scheme 2 run on simulated `x1 + x2 + sin(3 x3) + sin(5 x4)` data.
 */
export function selection_run(n: number, p: number, iters: number, seed: bigint): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly correlation_curves: (a: number, b: number, c: number) => [number, number, number, number];
    readonly prior_draws: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: bigint) => [number, number, number, number];
    readonly selection_run: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
