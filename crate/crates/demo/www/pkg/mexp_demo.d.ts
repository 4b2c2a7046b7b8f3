/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    className(): string;
    /**
     * Pixels of frame `t` of `"original"`, `"low_rank"` or `"sparse"`,
     * row-major.
     */
    frame(t: number, part: string): Float64Array;
    frames(): number;
    height(): number;
    /**
     * Synthesizes one clip of class `class` (0..5) and decomposes it.
     */
    constructor(_class: number, seed: number, noise: number, motion: number);
    /**
     * Normalized 1D LBP histogram of one projection of frame `t`.
     */
    projectionHistogram(t: number, horizontal: boolean, improved: boolean, mask: number): Float64Array;
    /**
     * Horizontal (one value per row) or vertical (one per column)
     * projection of frame `t`.
     */
    projection(t: number, horizontal: boolean, improved: boolean): Float64Array;
    rpcaIterations(): number;
    /**
     * Temporal texture image of the whole frame (`"XT"` or `"YT"`),
     * row-major with time along the width, resampled to `length` columns
     * when `length > 0`.
     */
    temporalTexture(plane: string, improved: boolean, length: number): Texture;
    /**
     * Normalized circular LBP histogram of a temporal texture image.
     */
    textureHistogram(plane: string, improved: boolean, length: number, neighbors: number, radius: number): Float64Array;
    width(): number;
}

export class Texture {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    height(): number;
    values(): Float64Array;
    width(): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly __wbg_texture_free: (a: number, b: number) => void;
    readonly demo_className: (a: number) => [number, number];
    readonly demo_frame: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_frames: (a: number) => number;
    readonly demo_height: (a: number) => number;
    readonly demo_new: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly demo_projection: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_projectionHistogram: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly demo_rpcaIterations: (a: number) => number;
    readonly demo_temporalTexture: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly demo_textureHistogram: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly demo_width: (a: number) => number;
    readonly texture_height: (a: number) => number;
    readonly texture_values: (a: number) => [number, number];
    readonly texture_width: (a: number) => number;
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
