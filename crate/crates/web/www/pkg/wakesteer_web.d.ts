/* tslint:disable */
/* eslint-disable */

export function compare_controllers(layout: string, spacing: number, k: number, v: number, manual: Float64Array): Float64Array;

export function field_extent(layout: string, spacing: number): Float64Array;

export function turbine_positions(layout: string, spacing: number): Float64Array;

export function vonmises_density(mu: number, kappa: number, n: number): Float64Array;

export function vonmises_entropy(kappa: number): number;

export function vonmises_samples(mu: number, kappa: number, count: number, seed: bigint): Float64Array;

export function wake_field(layout: string, spacing: number, k: number, yaws: Float64Array, nx: number, ny: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly compare_controllers: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly field_extent: (a: number, b: number, c: number) => [number, number, number, number];
    readonly turbine_positions: (a: number, b: number, c: number) => [number, number, number, number];
    readonly vonmises_density: (a: number, b: number, c: number) => [number, number, number, number];
    readonly vonmises_entropy: (a: number) => [number, number, number];
    readonly vonmises_samples: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
    readonly wake_field: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
