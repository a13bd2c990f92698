/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Concept activations of one sample and the zero-shot and trained
     * class probabilities.
     */
    activation(sample: number, tau: number): string;
    /**
     * Accuracy and surviving weights at every number of effective concepts.
     */
    nec_sweep(): string;
    /**
     * Generates the embeddings for `seed` and trains both classifiers.
     */
    constructor(seed: number);
    /**
     * Weights for one novel class mixed from the base classes, and the
     * accuracy of all transferred rows on novel samples.
     */
    transfer(novel: number, tau: number): string;
    readonly samples: number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_activation: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_nec_sweep: (a: number) => [number, number, number, number];
    readonly demo_new: (a: number) => [number, number, number];
    readonly demo_samples: (a: number) => number;
    readonly demo_transfer: (a: number, b: number, c: number) => [number, number, number, number];
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
