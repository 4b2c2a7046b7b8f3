/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const __wbg_texture_free: (a: number, b: number) => void;
export const demo_className: (a: number) => [number, number];
export const demo_frame: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const demo_frames: (a: number) => number;
export const demo_height: (a: number) => number;
export const demo_new: (a: number, b: number, c: number, d: number) => [number, number, number];
export const demo_projection: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const demo_projectionHistogram: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const demo_rpcaIterations: (a: number) => number;
export const demo_temporalTexture: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const demo_textureHistogram: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
export const demo_width: (a: number) => number;
export const texture_height: (a: number) => number;
export const texture_values: (a: number) => [number, number];
export const texture_width: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
