/* tslint:disable */
/* eslint-disable */

export class AnalyticDemo {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * ESS / N per iteration.
     */
    readonly ess: Float64Array;
    readonly estimate: Float64Array;
    readonly fixedPointVariance: number;
    readonly ise: number;
    readonly truth: Float64Array;
    readonly variance: number;
    readonly xs: Float64Array;
}

export class ImageDemo {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly data: Float64Array;
    readonly estimate: Float64Array;
    readonly height: number;
    readonly ise: number;
    readonly matchDistance: number;
    /**
     * Row-major pixel masses.
     */
    readonly truth: Float64Array;
    readonly width: number;
}

/**
 * Row-major `size x size` phantom, normalized to unit mass.
 */
export function phantom(size: number, modified: boolean): Float64Array;

/**
 * SMC on `f = N(0.5, 0.043^2)` blurred by `N(0, 0.045^2)`.
 */
export function runAnalytic(n_particles: number, epsilon: number, iterations: number, seed: number): AnalyticDemo;

/**
 * Motion-blur a synthetic 96x48 scene and reconstruct it with `method`
 * (`smc`, `rl`, `em`, `ems-gaussian`, `ems-3point`).
 */
export function runDeblur(method: string, blur_length: number, n_particles: number, iterations: number, seed: number): ImageDemo;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_analyticdemo_free: (a: number, b: number) => void;
    readonly __wbg_imagedemo_free: (a: number, b: number) => void;
    readonly analyticdemo_ess: (a: number) => [number, number];
    readonly analyticdemo_estimate: (a: number) => [number, number];
    readonly analyticdemo_fixed_point_variance: (a: number) => number;
    readonly analyticdemo_ise: (a: number) => number;
    readonly analyticdemo_truth: (a: number) => [number, number];
    readonly analyticdemo_variance: (a: number) => number;
    readonly analyticdemo_xs: (a: number) => [number, number];
    readonly imagedemo_data: (a: number) => [number, number];
    readonly imagedemo_estimate: (a: number) => [number, number];
    readonly imagedemo_height: (a: number) => number;
    readonly imagedemo_ise: (a: number) => number;
    readonly imagedemo_match_distance: (a: number) => number;
    readonly imagedemo_truth: (a: number) => [number, number];
    readonly imagedemo_width: (a: number) => number;
    readonly phantom: (a: number, b: number) => [number, number, number, number];
    readonly runAnalytic: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly runDeblur: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
