/** Batch ids tie every label event of one user gesture together.
 *
 * A gesture (one submit press) mints exactly one id; retries after a
 * network failure reuse it, so the server-side duplicate guard makes the
 * retry a no-op instead of a double write.
 */

export type IdMinter = () => string;

export function mintBatchId(): string {
  const rand = Math.random().toString(36).slice(2, 10);
  return `ui-${Date.now().toString(36)}-${rand}`;
}
