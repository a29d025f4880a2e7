/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const compare_controllers: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
export const field_extent: (a: number, b: number, c: number) => [number, number, number, number];
export const turbine_positions: (a: number, b: number, c: number) => [number, number, number, number];
export const vonmises_density: (a: number, b: number, c: number) => [number, number, number, number];
export const vonmises_entropy: (a: number) => [number, number, number];
export const vonmises_samples: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
export const wake_field: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
