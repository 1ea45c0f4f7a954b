/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_analyticdemo_free: (a: number, b: number) => void;
export const __wbg_imagedemo_free: (a: number, b: number) => void;
export const analyticdemo_ess: (a: number) => [number, number];
export const analyticdemo_estimate: (a: number) => [number, number];
export const analyticdemo_fixed_point_variance: (a: number) => number;
export const analyticdemo_ise: (a: number) => number;
export const analyticdemo_truth: (a: number) => [number, number];
export const analyticdemo_variance: (a: number) => number;
export const analyticdemo_xs: (a: number) => [number, number];
export const imagedemo_data: (a: number) => [number, number];
export const imagedemo_estimate: (a: number) => [number, number];
export const imagedemo_height: (a: number) => number;
export const imagedemo_ise: (a: number) => number;
export const imagedemo_match_distance: (a: number) => number;
export const imagedemo_truth: (a: number) => [number, number];
export const imagedemo_width: (a: number) => number;
export const phantom: (a: number, b: number) => [number, number, number, number];
export const runAnalytic: (a: number, b: number, c: number, d: number) => [number, number, number];
export const runDeblur: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
