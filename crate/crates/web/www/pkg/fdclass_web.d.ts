/* tslint:disable */
/* eslint-disable */

/**
 * Simulated curves with their labels.
 */
export class Simulation {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly grid: Float64Array;
    /**
     * 1-based class labels.
     */
    readonly labels: Uint32Array;
    /**
     * Row-major, one curve per row.
     */
    readonly values: Float64Array;
}

export function basis_curves(n_basis: number, intervals: number): Float64Array;

export function category_probabilities(model: string, predictors: Float64Array, gamma2: number): Float64Array;

export function simulate(kind: string, n_per_class: number, seed: number, variance: number, decay: number): Simulation;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_simulation_free: (a: number, b: number) => void;
    readonly basis_curves: (a: number, b: number) => [number, number, number, number];
    readonly category_probabilities: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly simulate: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly simulation_grid: (a: number) => [number, number];
    readonly simulation_labels: (a: number) => [number, number];
    readonly simulation_values: (a: number) => [number, number];
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
