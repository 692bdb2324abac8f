/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_planresult_free: (a: number, b: number) => void;
export const __wbg_trainer_free: (a: number, b: number) => void;
export const planresult_cols: (a: number) => number;
export const planresult_converged: (a: number) => number;
export const planresult_cost: (a: number) => number;
export const planresult_entropy: (a: number) => number;
export const planresult_iterations: (a: number) => number;
export const planresult_plan: (a: number) => [number, number];
export const planresult_rows: (a: number) => number;
export const prototype_costs: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const trainer_epoch: (a: number) => number;
export const trainer_map: (a: number) => [number, number, number];
export const trainer_new: (a: number, b: number, c: number, d: number) => [number, number, number];
export const trainer_step: (a: number) => [number, number, number];
export const transport_plan: (a: number, b: number, c: number, d: number) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
