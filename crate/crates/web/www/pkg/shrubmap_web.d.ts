/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Dark-pixel mask and candidate patches, scored by the classifier.
     */
    candidates(gray_threshold: number, min_area: number): void;
    /**
     * Generates a scene and trains the built-in classifier on its patches.
     */
    constructor(seed: number, n_blobs: number);
    overlay_rgba(): Uint8Array;
    /**
     * Scene pixels as RGBA.
     */
    scene_rgba(): Uint8Array;
    /**
     * Region-merging segmentation; draws segment boundaries.
     */
    segment(scale: number, shape: number, compactness: number): void;
    /**
     * Side length of the square scene.
     */
    size(): number;
    /**
     * Single-size sliding-window heatmap, thresholded at 0.5.
     */
    sliding(window: number, stride_fraction: number): void;
    summary(): string;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_candidates: (a: number, b: number, c: number) => [number, number];
    readonly demo_new: (a: number, b: number) => [number, number, number];
    readonly demo_overlay_rgba: (a: number) => [number, number];
    readonly demo_scene_rgba: (a: number) => [number, number];
    readonly demo_segment: (a: number, b: number, c: number, d: number) => [number, number];
    readonly demo_size: (a: number) => number;
    readonly demo_sliding: (a: number, b: number, c: number) => [number, number];
    readonly demo_summary: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
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
