/* tslint:disable */
/* eslint-disable */

export class PlanResult {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    cols(): number;
    converged(): boolean;
    cost(): number;
    entropy(): number;
    iterations(): number;
    /**
     * Row-major plan entries.
     */
    plan(): Float64Array;
    rows(): number;
}

/**
 * A small experiment advanced one epoch per call.
 */
export class Trainer {
    free(): void;
    [Symbol.dispose](): void;
    epoch(): number;
    /**
     * Current retrieval mAP of sketch queries against the photo gallery.
     */
    map(): number;
    /**
     * `mode` is one of `v1`..`v5`; `gap` is the sketch rotation angle.
     */
    constructor(mode: string, seed: number, gap: number);
    /**
     * Trains one epoch and returns the new mAP.
     */
    step(): number;
}

/**
 * For a unit feature at `angle` and `k` prototypes on the circle, returns
 * `k` cluster probabilities followed by the `k` joint costs to each prototype.
 */
export function prototype_costs(angle: number, k: number, temperature: number, alpha: number, beta: number): Float64Array;

/**
 * Solves entropic OT on the grid cost with uniform marginals.
 */
export function transport_plan(rows: number, cols: number, shift: number, lambda: number): PlanResult;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_planresult_free: (a: number, b: number) => void;
    readonly __wbg_trainer_free: (a: number, b: number) => void;
    readonly planresult_cols: (a: number) => number;
    readonly planresult_converged: (a: number) => number;
    readonly planresult_cost: (a: number) => number;
    readonly planresult_entropy: (a: number) => number;
    readonly planresult_iterations: (a: number) => number;
    readonly planresult_plan: (a: number) => [number, number];
    readonly planresult_rows: (a: number) => number;
    readonly prototype_costs: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly trainer_epoch: (a: number) => number;
    readonly trainer_map: (a: number) => [number, number, number];
    readonly trainer_new: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly trainer_step: (a: number) => [number, number, number];
    readonly transport_plan: (a: number, b: number, c: number, d: number) => [number, number, number];
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
